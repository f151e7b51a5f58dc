"""The top-level package must import cleanly and export what it claims."""

import echelon


def test_public_names_resolve():
    for name in echelon.__all__:
        assert getattr(echelon, name) is not None


def test_version():
    assert echelon.__version__
