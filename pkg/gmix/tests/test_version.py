import gmix


def test_version():
    assert gmix.__version__
