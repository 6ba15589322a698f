# Placeholder controller shipped with the demo template. The bundled
# stand-in simulator ignores it; a real simulation would load it from the
# instance copy.
STEP_MS = 32
