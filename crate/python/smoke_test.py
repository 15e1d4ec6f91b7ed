"""Smoke test for the jumperg_py extension module."""

import math
import tempfile

import jumperg_py as jg


def main():
    ou = jg.Model.jump_ou(theta=1.0, sigma=1.0, jump_rate=1.0)
    assert ou.dim == 1
    assert ou.constants()["r"] == 2.0

    ens = jg.simulate(ou, [0.0], horizon=1.0, dt=0.01, n_paths=2000, seed=1, checkpoints=[0.5])
    mean, se = ens.mean(1.0)
    assert abs(mean) < 4 * se + 1e-12, (mean, se)
    m2, se2 = ens.second_moment(1.0)
    exact = (4.0 / 3.0) / 2.0 * (1.0 - math.exp(-2.0))
    assert abs(m2 - exact) < 4 * se2, (m2, exact, se2)
    again = jg.simulate(ou, [0.0], horizon=1.0, dt=0.01, n_paths=2000, seed=1, checkpoints=[0.5])
    assert again.marginal(0.5) == ens.marginal(0.5)

    bm = jg.Model.brownian()
    tails = jg.coupling_tail(bm, [0.3], [0.0], delta=0.3, horizon=1.0, dt=0.01, n_paths=4000, seed=2)
    expected = math.erf(0.3 / math.sqrt(8.0))
    assert abs(tails[0]["estimate"] - expected) < 0.05, (tails, expected)

    probe = jg.irreducibility_probe(ou, [0.0], [3.0], 0.5, 1.0, 20000, 3)
    assert probe["status"] in ("certified", "positivity-not-demonstrated")

    s = jg.sqrt_psd([[4.0, 0.0], [0.0, 9.0]])
    assert abs(s[0][0] - 2.0) < 1e-12 and abs(s[1][1] - 3.0) < 1e-12
    assert abs(jg.hs_norm([[1.0, 2.0], [3.0, 4.0]]) - math.sqrt(30.0)) < 1e-12
    assert jg.lemma21_suite(pairs=300, seed=4)["holds"] == 300
    assert abs(jg.rho_delta(0.1, 0.2) - 0.1 * math.log(10.0)) < 1e-12
    assert abs(jg.ode_closed_form(4.0, 1.0, 1.0, 1.0) - 0.5) < 1e-12
    assert abs(jg.ode_bound(4.0, 1.0, 0.0, 1.0, 1.0) - 0.5) < 1e-8

    try:
        jg.parse_config('kind = "lemma21"\nseed = 1\ndeltt = 2\n')
    except ValueError as e:
        assert "deltt" in str(e)
    else:
        raise AssertionError("unknown key accepted")

    with tempfile.TemporaryDirectory() as out:
        report = jg.run_experiment('kind = "lemma21"\nseed = 1\n[lemma21]\npairs = 200\n', out, threads=1)
        assert report["result"]["summary"] == "holds: 200/200"

    print("smoke test passed")


if __name__ == "__main__":
    main()
