"""Quick check that the extension imports and agrees with itself."""

import math

import ncc_ofdma as n


def main():
    cfg = n.NetworkConfig(2, 2, 2, 4, 2)
    assert cfg.mode == "realistic" and cfg.k2 == 2, cfg

    snr = n.db_to_linear(10.0)
    p = n.block_outage_prob(snr)
    assert abs(p - (1 - math.exp(-1 / snr))) < 1e-12

    exact = n.overall_outage(cfg, snr)
    assert n.overall_outage(cfg, snr, "optimistic") < exact

    mc, se, trials = n.estimate_outage(cfg, snr, 50_000, 7)
    assert trials == 50_000
    assert abs(mc - exact) < 4 * se + 1e-3, (mc, exact, se)
    # same seed, same answer regardless of worker count
    assert n.estimate_outage(cfg, snr, 20_000, 3, workers=1) == n.estimate_outage(cfg, snr, 20_000, 3, workers=2)

    frame = n.simulate_frame(cfg, snr, 5)
    assert frame.m == len(frame.relay_decode_set)

    assigned = n.max_constraint_matching(2, 4, [(0, 0), (0, 1), (1, 1), (1, 2), (1, 3)], 2)
    assert assigned == [[0, 1], [2, 3]], assigned
    holds, witness = n.hall_condition(2, 3, [(0, 0), (0, 1), (1, 1), (1, 2)], 2)
    assert not holds and witness is not None

    snrs = [n.db_to_linear(d) for d in range(30, 51, 2)]
    cfg1 = n.NetworkConfig(2, 2, 1, 4, 2)
    slope = n.diversity_slope(snrs, n.analytic_curve(cfg1, snrs), snrs[0], snrs[-1])
    assert abs(slope - 3.0) < 0.05, slope

    try:
        n.NetworkConfig(2, 2, 0, 4, 2)
    except ValueError as e:
        assert "L" in str(e)
    else:
        raise AssertionError("L = 0 accepted")

    print("smoke test ok:", cfg, f"P_out(10 dB) = {exact:.4e}, MC {mc:.4e} ± {se:.1e}")


if __name__ == "__main__":
    main()
