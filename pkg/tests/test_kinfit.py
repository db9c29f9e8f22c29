import math

import numpy as np
import pytest
from scipy.optimize import NonlinearConstraint, minimize
from scipy.stats import chi2 as chi2_dist

from zcalo.constants import PI0_MASS
from zcalo.errors import DegenerateCovarianceError, UnphysicalInputError
from zcalo.kinfit import (PhotonParameters, chi2_probability, fit_pi0_batch,
                          fit_pi0_mass, gamma_pair_mass2, pair_four_vector)


def symmetric_alpha(e_pi: float) -> np.ndarray:
    """Symmetric pi0 decay: both photons at e_pi/2, opening angle from the
    mass, photons symmetric about the x axis."""
    half = math.acos(1.0 - PI0_MASS ** 2 / (2.0 * (e_pi / 2) ** 2)) / 2.0
    t1 = math.pi / 2 - half
    t2 = math.pi / 2 + half
    return np.array([e_pi / 2, t1, 0.0, e_pi / 2, t2, 0.0])


def smears_for(alpha: np.ndarray, a=0.05, c=1.5, d=0.5, r=1800.0) -> np.ndarray:
    out = np.empty(6)
    for k, base in ((0, 0), (3, 3)):
        e = alpha[base]
        sin_t = math.sin(alpha[base + 1])
        s_pos = math.sqrt(c * c / e + d * d)
        out[base] = (a * math.sqrt(e)) ** 2
        out[base + 1] = (s_pos / r) ** 2
        out[base + 2] = (s_pos / (r * sin_t)) ** 2
    return out


class TestExactCase:
    def test_measured_mass_equals_target(self):
        alpha = symmetric_alpha(3.0)
        var = smears_for(alpha)
        assert math.sqrt(gamma_pair_mass2(alpha)) == pytest.approx(
            PI0_MASS, abs=1e-12)
        res = fit_pi0_mass(PhotonParameters(alpha=alpha, var=var))
        assert res.converged
        assert res.chi2 == pytest.approx(0.0, abs=1e-20)
        assert res.n_iter == 1
        assert np.allclose(res.alpha_fit, alpha, rtol=0, atol=1e-12)


def generate_ensemble(n, e_pi, a, seed, isotropic=False):
    """Truth + smeared parameters with the exact smearing covariance."""
    rng = np.random.default_rng(seed)
    if isotropic:
        beta = math.sqrt(1 - (PI0_MASS / e_pi) ** 2)
        ct = rng.uniform(-1, 1, n)
        e1 = 0.5 * e_pi * (1 + beta * ct)
    else:
        e1 = np.full(n, e_pi / 2)
    e2 = e_pi - e1
    pt = 0.5 * PI0_MASS * np.sqrt(np.maximum(
        1 - ((e1 - e2) / (beta * e_pi)) ** 2 if isotropic else 1.0, 0.0))
    if not isotropic:
        pt = np.full(n, 0.5 * PI0_MASS)
    th1 = np.arctan2(pt, np.sqrt(np.maximum(e1 ** 2 - pt ** 2, 0)))
    th2 = np.arctan2(pt, np.sqrt(np.maximum(e2 ** 2 - pt ** 2, 0)))
    phi_plane = rng.uniform(0, 2 * math.pi, n)

    def direction(off, phip):
        x = np.cos(off)
        rr = np.sin(off)
        return np.stack([x, rr * np.cos(phip), rr * np.sin(phip)], axis=1)

    d1 = direction(th1, phi_plane)
    d2 = direction(-th2, phi_plane)
    t1 = np.arccos(d1[:, 2])
    p1 = np.arctan2(d1[:, 1], d1[:, 0])
    t2 = np.arccos(d2[:, 2])
    p2 = np.arctan2(d2[:, 1], d2[:, 0])

    c, d, r = 1.5, 0.5, 1800.0
    se1 = a * np.sqrt(e1)
    se2 = a * np.sqrt(e2)
    sp1 = np.sqrt(c * c / e1 + d * d)
    sp2 = np.sqrt(c * c / e2 + d * d)
    st1 = sp1 / r
    st2 = sp2 / r
    sf1 = sp1 / (r * np.sin(t1))
    sf2 = sp2 / (r * np.sin(t2))
    alpha = np.stack([
        e1 + rng.normal(0, 1, n) * se1, t1 + rng.normal(0, 1, n) * st1,
        p1 + rng.normal(0, 1, n) * sf1, e2 + rng.normal(0, 1, n) * se2,
        t2 + rng.normal(0, 1, n) * st2, p2 + rng.normal(0, 1, n) * sf2,
    ], axis=1)
    var = np.stack([se1 ** 2, st1 ** 2, sf1 ** 2,
                    se2 ** 2, st2 ** 2, sf2 ** 2], axis=1)
    return alpha, var


class TestStatisticalClosure:
    def test_pull_closure_symmetric_decays(self):
        alpha, var = generate_ensemble(100_000, 5.0, a=0.05, seed=30)
        _, chi2, _, conv, pulls = fit_pi0_batch(alpha, var)
        p = pulls[conv]
        means = p.mean(axis=0)
        widths = p.std(axis=0, ddof=1)
        assert np.all(np.abs(means) < 0.02)
        assert np.all(np.abs(widths - 1.0) < 0.03)

    def test_chi2_follows_one_dof(self):
        alpha, var = generate_ensemble(100_000, 5.0, a=0.05, seed=31)
        _, chi2, _, conv, _ = fit_pi0_batch(alpha, var)
        c = chi2[conv]
        assert c.mean() == pytest.approx(1.0, abs=0.02)
        frac = (c > 3.841).mean()
        assert frac == pytest.approx(0.05, abs=0.003)


class TestShiftedEnergy:
    def test_fit_pulls_shifted_energy_down(self):
        alpha0 = symmetric_alpha(4.0)
        var = smears_for(alpha0, a=0.16)
        shifted = alpha0.copy()
        shifted[0] += 3.0 * math.sqrt(var[0])
        res = fit_pi0_mass(PhotonParameters(alpha=shifted, var=var))
        assert res.converged
        assert res.alpha_fit[0] < shifted[0]

        # independent oracle: numerical constrained minimisation
        def objective(x):
            return np.sum((x - shifted) ** 2 / var)

        constraint = NonlinearConstraint(
            lambda x: gamma_pair_mass2(x) - PI0_MASS ** 2, 0.0, 0.0)
        oracle = minimize(objective, shifted, method="SLSQP",
                          constraints=[constraint],
                          options={"maxiter": 500, "ftol": 1e-14})
        assert oracle.success
        assert oracle.x[0] < shifted[0]
        assert np.allclose(res.alpha_fit, oracle.x, rtol=1e-4, atol=1e-7)
        assert res.chi2 == pytest.approx(objective(oracle.x), rel=1e-4)


class TestChi2Probability:
    def test_zero(self):
        assert chi2_probability(0.0) == 1.0

    def test_five_percent_point(self):
        assert chi2_probability(3.841) == pytest.approx(0.050, abs=1e-3)
        assert chi2_probability(3.841) == pytest.approx(
            chi2_dist.sf(3.841, 1), abs=1e-12)

    def test_one(self):
        assert chi2_probability(1.0) == pytest.approx(0.3173, abs=1e-3)

    def test_negative_rejected(self):
        with pytest.raises(UnphysicalInputError):
            chi2_probability(-0.1)

    def test_general_ndof(self):
        assert chi2_probability(5.0, ndof=3) == pytest.approx(
            chi2_dist.sf(5.0, 3), abs=1e-12)


class TestContracts:
    def test_converged_mass_on_target(self):
        alpha, var = generate_ensemble(200, 3.0, a=0.16, seed=32,
                                       isotropic=True)
        af, _, _, conv, _ = fit_pi0_batch(alpha, var)
        for row in af[conv]:
            m = math.sqrt(gamma_pair_mass2(row))
            assert abs(m - PI0_MASS) < 1e-4

    def test_eta_target_supported(self):
        from zcalo.constants import ETA_MASS
        alpha = symmetric_alpha(5.0)
        var = smears_for(alpha)
        res = fit_pi0_mass(PhotonParameters(alpha=alpha, var=var),
                           m_target=ETA_MASS)
        assert res.converged
        assert res.fitted_pi0.mass == pytest.approx(ETA_MASS, abs=1e-4)

    def test_swap_symmetry(self):
        alpha, var = generate_ensemble(50, 4.0, a=0.16, seed=33,
                                       isotropic=True)
        af1, c1, _, conv1, _ = fit_pi0_batch(alpha, var)
        swap = [3, 4, 5, 0, 1, 2]
        af2, c2, _, conv2, _ = fit_pi0_batch(alpha[:, swap], var[:, swap])
        assert np.array_equal(conv1, conv2)
        assert np.allclose(c1, c2, rtol=1e-9, atol=1e-12)
        assert np.allclose(af1, af2[:, swap], rtol=1e-9, atol=1e-9)

    def test_degenerate_covariance_rejected(self):
        alpha = symmetric_alpha(3.0)
        var = smears_for(alpha)
        var[2] = 0.0
        with pytest.raises(DegenerateCovarianceError):
            fit_pi0_mass(PhotonParameters(alpha=alpha, var=var))

    def test_collinear_pair_rejected(self):
        alpha = np.array([2.0, 1.0, 0.0, 3.0, 1.0, 0.0])  # zero opening angle
        var = np.full(6, 1e-4)
        with pytest.raises(UnphysicalInputError):
            fit_pi0_mass(PhotonParameters(alpha=alpha, var=var))

    def test_non_convergence_flagged(self):
        from zcalo.kinfit import _fit_batch
        alpha = symmetric_alpha(3.0)
        alpha = alpha.copy()
        alpha[0] *= 3.0  # far off the constraint
        var = smears_for(alpha)[None, :]
        _, _, n_iter, conv, _ = _fit_batch(alpha[None, :], var,
                                           PI0_MASS ** 2, 1, 1e-12, 1e-12)
        assert not conv[0]
        assert n_iter[0] == 1

    def test_fitted_pi0_four_vector(self):
        alpha, var = generate_ensemble(1, 4.0, a=0.05, seed=34)
        res = fit_pi0_mass(PhotonParameters(alpha=alpha[0], var=var[0]))
        v = pair_four_vector(res.alpha_fit)
        assert res.fitted_pi0.e == pytest.approx(v.e, abs=1e-12)
        assert res.fitted_pi0.mass == pytest.approx(PI0_MASS, abs=1e-4)


class TestBackends:
    def test_numba_and_numpy_agree(self):
        numba = pytest.importorskip("numba")  # noqa: F841
        from zcalo import _fit_numba, _fit_numpy
        alpha, var = generate_ensemble(2000, 2.0, a=0.16, seed=35,
                                       isotropic=True)
        args = (alpha, var, PI0_MASS ** 2, 20, 1e-6, 1e-6)
        a1, c1, n1, k1, p1 = _fit_numba.fit_batch(*args)
        a2, c2, n2, k2, p2 = _fit_numpy.fit_batch(*args)
        assert np.array_equal(n1, n2)
        assert np.array_equal(k1, k2)
        assert np.allclose(a1, a2, rtol=1e-10, atol=1e-12)
        assert np.allclose(c1, c2, rtol=1e-9, atol=1e-12)
        assert np.allclose(p1, p2, rtol=1e-9, atol=1e-9)

    def test_backend_env_selection(self, monkeypatch):
        import importlib
        import zcalo.kinfit as kf
        monkeypatch.setenv("ZCALO_BACKEND", "numpy")
        mod = importlib.reload(kf)
        try:
            assert mod.BACKEND_NAME == "numpy"
            alpha = symmetric_alpha(3.0)
            var = smears_for(alpha)
            res = mod.fit_pi0_mass(mod.PhotonParameters(alpha=alpha, var=var))
            assert res.converged
        finally:
            monkeypatch.delenv("ZCALO_BACKEND")
            importlib.reload(kf)
