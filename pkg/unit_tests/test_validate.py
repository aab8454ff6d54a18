import pytest

from pekerisrefocus.medium import CouplingMatrices, assemble_coupling
from pekerisrefocus.validate import CHECKS, ValidationContext, render_report, validate_suite

FAST = ['mirror-symmetry', 'power-conservation', 'diffusion-reflecting', 'dispersion-kernel']
ACCEPTANCE = ['coupling-strength-limits', 'markov-consistency', 'diffusion-order', 'profile-widening',
              'alpha-independence', 'gaussian-kernel']


def flipped_assembly(mode_set, medium):
    coupling = assemble_coupling(mode_set, medium)
    return CouplingMatrices.from_transport(-coupling.gamma_c, coupling.lambda_c)


def test_registry_names_invariants():
    assert 'montecarlo-vs-ode' in CHECKS and CHECKS['montecarlo-vs-ode']['slow']
    assert 'epsilon-bias' in CHECKS and CHECKS['epsilon-bias']['slow']
    assert all(name in CHECKS and not CHECKS[name]['slow'] for name in ACCEPTANCE)
    assert all(spec['invariant'] for spec in CHECKS.values())


def test_selected_checks_pass():
    report = validate_suite(names=FAST)
    assert report['passed'], report['checks']
    assert [c['name'] for c in report['checks']] == [name for name in CHECKS if name in FAST]
    assert report['counts'] == {'pass': len(FAST), 'fail': 0, 'skip': 0}
    assert report['schema_version'] == 1


def test_slow_checks_are_skipped_by_default():
    report = validate_suite(names=['montecarlo-vs-ode', 'epsilon-bias'])
    assert [c['status'] for c in report['checks']] == ['skip', 'skip']
    assert report['passed']


def test_flipped_coupling_sign_is_detected():
    report = validate_suite(ValidationContext(assemble=flipped_assembly), names=['power-conservation'])
    assert not report['passed']
    assert report['checks'][0]['status'] == 'fail'


def test_zero_medium_skips_random_checks():
    report = validate_suite(ValidationContext(medium_preset='zero'), names=['equidistribution'])
    assert report['checks'][0]['status'] == 'skip'


def test_acceptance_checks_pass():
    report = validate_suite(names=ACCEPTANCE)
    assert report['passed'], report['checks']
    assert report['counts'] == {'pass': len(ACCEPTANCE), 'fail': 0, 'skip': 0}


def test_zero_medium_skips_coupling_strength():
    report = validate_suite(ValidationContext(medium_preset='zero'), names=['coupling-strength-limits'])
    assert report['checks'][0]['status'] == 'skip'


@pytest.mark.slow
def test_full_suite():
    assert validate_suite(include_slow=True, context=ValidationContext(threads=2))['passed']


def test_render_report():
    html = render_report(validate_suite(names=['mirror-symmetry', 'montecarlo-vs-ode']))
    assert 'mirror-symmetry' in html
    assert 'montecarlo-vs-ode' in html
    assert '1 passed, 0 failed, 1 skipped' in html
