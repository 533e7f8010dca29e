"""Models must build every second derivative from nested first derivatives."""

import ast
import inspect

from qchydro import brackets, fields, models, presets

FORBIDDEN = {"second_diff", "laplacian", "spectral_laplacian"}


def _called_names(module):
    tree = ast.parse(inspect.getsource(module))
    for node in ast.walk(tree):
        if isinstance(node, ast.Attribute):
            yield node.attr
        elif isinstance(node, ast.Name):
            yield node.id


def test_models_never_reference_second_derivatives():
    for mod in (models, brackets):
        assert not FORBIDDEN & set(_called_names(mod)), mod.__name__


def test_models_never_call_second_derivatives_at_runtime(monkeypatch):
    def boom(*a, **k):
        raise AssertionError("second-derivative stencil used")

    for name in FORBIDDEN:
        monkeypatch.setattr(fields, name, boom)
    state, ham = presets.smooth_3d(12)
    for name in ("qc3d", "qc3d_stress", "ehrenfest", "classical"):
        models.MODELS[name](state, ham)
    state, ham = presets.smooth_2d(16)
    for name in ("qc_planar", "pure_state_planar"):
        models.MODELS[name](state, ham)
