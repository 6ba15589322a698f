import json

import pytest

from simcampaign.manifest import (
    FieldTypeError,
    Manifest,
    ManifestSyntaxError,
    MissingFieldError,
    NodeProfile,
    UnknownFieldError,
    load_manifest,
    parse_manifest,
    serialize_manifest,
    validate,
)

MINIMAL = {
    "campaign_name": "merge-study",
    "template_dir": "template",
    "world_file": "world.wbt",
    "total_runs": 48,
    "output_dir": "out",
}


def doc(**overrides) -> str:
    fields = dict(MINIMAL)
    fields.update(overrides)
    return json.dumps(fields)


def test_reference_shape_has_48_instances_per_job():
    m = parse_manifest(doc(nodes=6, slots_per_node=8))
    assert m.instances_per_job() == 48


def test_defaults_for_ladder_fields():
    m = parse_manifest(doc())
    assert m.base_port == 8873
    assert m.port_stride == 7
    assert m.display_start == 99


def test_other_defaults():
    m = parse_manifest(doc())
    assert m.nodes == 6
    assert m.slots_per_node == 8
    assert m.walltime_minutes == 15
    assert m.queue == "dice"
    assert m.mode == "headless"
    assert m.node_profile == NodeProfile(cores=40, ram_gb=744, scratch_gb=1843, gpus=2)
    assert m.command_template is None


def test_missing_required_field_names_it():
    fields = dict(MINIMAL)
    del fields["total_runs"]
    with pytest.raises(MissingFieldError) as excinfo:
        parse_manifest(json.dumps(fields))
    assert excinfo.value.field_name == "total_runs"
    assert "total_runs" in str(excinfo.value)


@pytest.mark.parametrize("name", ["campaign_name", "template_dir", "world_file", "output_dir"])
def test_every_required_field_enforced(name):
    fields = dict(MINIMAL)
    del fields[name]
    with pytest.raises(MissingFieldError) as excinfo:
        parse_manifest(json.dumps(fields))
    assert excinfo.value.field_name == name


def test_wrong_kind_is_a_type_error():
    with pytest.raises(FieldTypeError) as excinfo:
        parse_manifest(doc(total_runs="48"))
    assert excinfo.value.field_name == "total_runs"


def test_bool_is_not_an_integer():
    with pytest.raises(FieldTypeError):
        parse_manifest(doc(nodes=True))


def test_bad_mode_is_a_type_error():
    with pytest.raises(FieldTypeError):
        parse_manifest(doc(mode="batch"))


def test_unknown_field_rejected():
    with pytest.raises(UnknownFieldError) as excinfo:
        parse_manifest(doc(walltime="15:00"))
    assert excinfo.value.field_name == "walltime"


def test_unknown_node_profile_field_rejected():
    with pytest.raises(UnknownFieldError):
        parse_manifest(doc(node_profile={"cores": 40, "sockets": 2}))


def test_syntax_error_carries_position():
    with pytest.raises(ManifestSyntaxError) as excinfo:
        parse_manifest('{"campaign_name": }')
    assert excinfo.value.line == 1
    assert excinfo.value.column > 1


def test_non_object_document_rejected():
    with pytest.raises(FieldTypeError):
        parse_manifest("[1, 2, 3]")


def test_parse_is_deterministic():
    text = doc(nodes=3, queue="short")
    assert parse_manifest(text) == parse_manifest(text)


@pytest.mark.parametrize(
    "overrides",
    [
        {},
        {"nodes": 3, "slots_per_node": 5, "queue": "gpu", "mode": "gui"},
        {"base_port": 9000, "port_stride": 11, "display_start": 0},
        {"node_profile": {"cores": 8, "ram_gb": 32, "scratch_gb": 100, "gpus": 0}},
        {"command_template": "run {workdir}/{world_file} on :{display}"},
    ],
)
def test_serialize_parse_round_trip(overrides):
    m = parse_manifest(doc(**overrides))
    assert parse_manifest(serialize_manifest(m)) == m


def test_valid_reference_manifest_has_no_violations():
    m = parse_manifest(doc(nodes=6, slots_per_node=8))
    assert validate(m) == []


def test_zero_stride_is_one_violation():
    m = parse_manifest(doc(port_stride=0))
    violations = validate(m)
    assert len(violations) == 1
    assert "port_stride" in violations[0]


def test_port_range_overflow_is_one_violation():
    # 65530 + 7 * 47 = 65859 > 65535
    m = parse_manifest(doc(base_port=65530, nodes=6, slots_per_node=8))
    violations = validate(m)
    assert len(violations) == 1
    assert "65859" in violations[0]
    assert "65535" in violations[0]


def test_low_base_port_flagged():
    m = parse_manifest(doc(base_port=80))
    assert any("1024" in v for v in validate(m))


def test_violations_accumulate():
    m = parse_manifest(doc(total_runs=0, nodes=0, walltime_minutes=0))
    violations = validate(m)
    assert len(violations) >= 3


def test_validate_never_raises_on_parsed_corpus():
    corpus = [
        doc(),
        doc(total_runs=0),
        doc(port_stride=-3),
        doc(base_port=65535, nodes=8, slots_per_node=8),
        doc(node_profile={"cores": 0, "gpus": -1}),
        doc(campaign_name=""),
        doc(mode="gui", walltime_minutes=1),
    ]
    for text in corpus:
        assert isinstance(validate(parse_manifest(text)), list)


def test_check_paths_flags_missing_template(tmp_path):
    m = parse_manifest(doc(template_dir=str(tmp_path / "nope")))
    assert any("template_dir" in v for v in validate(m, check_paths=True))


def test_check_paths_flags_missing_world_file(tmp_path):
    template = tmp_path / "template"
    template.mkdir()
    m = parse_manifest(doc(template_dir=str(template)))
    assert any("world_file" in v for v in validate(m, check_paths=True))


def test_check_paths_passes_when_present(tmp_path):
    template = tmp_path / "template"
    template.mkdir()
    (template / "world.wbt").write_text("port 8873\n")
    m = parse_manifest(doc(template_dir=str(template)))
    assert validate(m, check_paths=True) == []


def test_load_manifest_resolves_relative_dirs(tmp_path):
    (tmp_path / "template").mkdir()
    path = tmp_path / "m.json"
    path.write_text(doc())
    m = load_manifest(path)
    assert m.template_dir == str(tmp_path / "template")
    assert m.output_dir == str(tmp_path / "out")


def test_load_manifest_keeps_absolute_dirs(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(doc(template_dir="/srv/template", output_dir="/srv/out"))
    m = load_manifest(path)
    assert m.template_dir == "/srv/template"
    assert m.output_dir == "/srv/out"
