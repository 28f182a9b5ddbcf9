import pytest

from vibpolariton import examples


@pytest.fixture(scope='function',
                params=['harmonic_dispersion', 'scp_hardening',
                        'harmonic_vdmft', 'impurity_spectrum'])
def example(request):
    example_module = getattr(examples, request.param)
    return example_module.main()


def test_smoke_example(example):
    ...


def test_harmonic_vdmft_example():
    result = examples.harmonic_vdmft.main()
    assert result.converged
    assert result.n_iterations == 1


def test_impurity_example_finds_a_peak():
    gf, peaks = examples.impurity_spectrum.main()
    assert len(peaks) >= 1
