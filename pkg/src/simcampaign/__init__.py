"""simcampaign: batch simulation-campaign orchestration at desk scale.

Fan a simulation template out into uniquely-ported instance copies, plan
their distribution over job arrays, execute them locally with walltime
enforcement, and aggregate and evaluate the results.
"""

from .collector import AggregateDataset, ResourceSummary
from .evaluator import ComparisonDeltas, EvaluationReport, ThroughputConfig
from .fanout import InstancePlan
from .localexec import RunRecord, StatusSummary
from .manifest import Manifest, NodeProfile
from .scheduler import Assignment, DistributionPlan, JobArraySpec
from .simstub import StubConfig

__version__ = "0.1.0"

__all__ = [
    "AggregateDataset",
    "Assignment",
    "ComparisonDeltas",
    "DistributionPlan",
    "EvaluationReport",
    "InstancePlan",
    "JobArraySpec",
    "Manifest",
    "NodeProfile",
    "ResourceSummary",
    "RunRecord",
    "StatusSummary",
    "StubConfig",
    "ThroughputConfig",
    "__version__",
]
