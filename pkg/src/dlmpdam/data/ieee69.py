"""IEEE 69-node radial feeder (12.66 kV) and the bundled market case built on it.

Branch table columns: from, to, R (ohm), X (ohm), receiving-end load P (kW), Q (kVAr).
Node numbering starts at 0 for the substation, so the heavy 1244 kW load
sits at node 60 and the far end of that lateral is node 64.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

BASE_KV = 12.66
BASE_MVA = 1.0

BRANCHES = [
    (0, 1, 0.0005, 0.0012, 0.0, 0.0),
    (1, 2, 0.0005, 0.0012, 0.0, 0.0),
    (2, 3, 0.0015, 0.0036, 0.0, 0.0),
    (3, 4, 0.0251, 0.0294, 0.0, 0.0),
    (4, 5, 0.3660, 0.1864, 2.6, 2.2),
    (5, 6, 0.3811, 0.1941, 40.4, 30.0),
    (6, 7, 0.0922, 0.0470, 75.0, 54.0),
    (7, 8, 0.0493, 0.0251, 30.0, 22.0),
    (8, 9, 0.8190, 0.2707, 28.0, 19.0),
    (9, 10, 0.1872, 0.0619, 145.0, 104.0),
    (10, 11, 0.7114, 0.2351, 145.0, 104.0),
    (11, 12, 1.0300, 0.3400, 8.0, 5.0),
    (12, 13, 1.0440, 0.3450, 8.0, 5.5),
    (13, 14, 1.0580, 0.3496, 0.0, 0.0),
    (14, 15, 0.1966, 0.0650, 45.5, 30.0),
    (15, 16, 0.3744, 0.1238, 60.0, 35.0),
    (16, 17, 0.0047, 0.0016, 60.0, 35.0),
    (17, 18, 0.3276, 0.1083, 0.0, 0.0),
    (18, 19, 0.2106, 0.0690, 1.0, 0.6),
    (19, 20, 0.3416, 0.1129, 114.0, 81.0),
    (20, 21, 0.0140, 0.0046, 5.0, 3.5),
    (21, 22, 0.1591, 0.0526, 0.0, 0.0),
    (22, 23, 0.3463, 0.1145, 28.0, 20.0),
    (23, 24, 0.7488, 0.2475, 0.0, 0.0),
    (24, 25, 0.3089, 0.1021, 14.0, 10.0),
    (25, 26, 0.1732, 0.0572, 14.0, 10.0),
    (2, 27, 0.0044, 0.0108, 26.0, 18.6),
    (27, 28, 0.0640, 0.1565, 26.0, 18.6),
    (28, 29, 0.3978, 0.1315, 0.0, 0.0),
    (29, 30, 0.0702, 0.0232, 0.0, 0.0),
    (30, 31, 0.3510, 0.1160, 0.0, 0.0),
    (31, 32, 0.8390, 0.2816, 14.0, 10.0),
    (32, 33, 1.7080, 0.5646, 19.5, 14.0),
    (33, 34, 1.4740, 0.4873, 6.0, 4.0),
    (2, 35, 0.0044, 0.0108, 26.0, 18.55),
    (35, 36, 0.0640, 0.1565, 26.0, 18.55),
    (36, 37, 0.1053, 0.1230, 0.0, 0.0),
    (37, 38, 0.0304, 0.0355, 24.0, 17.0),
    (38, 39, 0.0018, 0.0021, 24.0, 17.0),
    (39, 40, 0.7283, 0.8509, 1.2, 1.0),
    (40, 41, 0.3100, 0.3623, 0.0, 0.0),
    (41, 42, 0.0410, 0.0478, 6.0, 4.3),
    (42, 43, 0.0092, 0.0116, 0.0, 0.0),
    (43, 44, 0.1089, 0.1373, 39.22, 26.3),
    (44, 45, 0.0009, 0.0012, 39.22, 26.3),
    (3, 46, 0.0034, 0.0084, 0.0, 0.0),
    (46, 47, 0.0851, 0.2083, 79.0, 56.4),
    (47, 48, 0.2898, 0.7091, 384.7, 274.5),
    (48, 49, 0.0822, 0.2011, 384.7, 274.5),
    (7, 50, 0.0928, 0.0473, 40.5, 28.3),
    (50, 51, 0.3319, 0.1114, 3.6, 2.7),
    (8, 52, 0.1740, 0.0886, 4.35, 3.5),
    (52, 53, 0.2030, 0.1034, 26.4, 19.0),
    (53, 54, 0.2842, 0.1447, 24.0, 17.2),
    (54, 55, 0.2813, 0.1433, 0.0, 0.0),
    (55, 56, 1.5900, 0.5337, 0.0, 0.0),
    (56, 57, 0.7837, 0.2630, 0.0, 0.0),
    (57, 58, 0.3042, 0.1006, 100.0, 72.0),
    (58, 59, 0.3861, 0.1172, 0.0, 0.0),
    (59, 60, 0.5075, 0.2585, 1244.0, 888.0),
    (60, 61, 0.0974, 0.0496, 32.0, 23.0),
    (61, 62, 0.1450, 0.0738, 0.0, 0.0),
    (62, 63, 0.7105, 0.3619, 227.0, 162.0),
    (63, 64, 1.0410, 0.5302, 59.0, 42.0),
    (10, 65, 0.2012, 0.0611, 18.0, 13.0),
    (65, 66, 0.0047, 0.0014, 18.0, 13.0),
    (11, 67, 0.7394, 0.2444, 28.0, 20.0),
    (67, 68, 0.0047, 0.0016, 28.0, 20.0),
]


def z_base(base_kv: float = BASE_KV, base_mva: float = BASE_MVA) -> float:
    return base_kv**2 / base_mva


def nominal_loads_mw() -> dict[int, tuple[float, float]]:
    """Node -> (P MW, Q MVAr) at 100% load."""
    return {to: (p / 1000.0, q / 1000.0) for _, to, _, _, p, q in BRANCHES if p or q}


# Hourly share of nominal load (slots 1..24) and wholesale price, $/MWh.
LOAD_PROFILE = [
    0.42, 0.40, 0.39, 0.39, 0.40, 0.44, 0.52, 0.60, 0.66, 0.70, 0.72, 0.73,
    0.75, 0.85, 0.97, 1.00, 0.96, 0.92, 0.93, 0.90, 0.82, 0.66, 0.52, 0.45,
]
LMP = [
    21.50, 21.00, 20.80, 20.90, 21.30, 22.00, 24.30, 30.20, 32.60, 28.40, 26.10, 25.30,
    24.80, 19.50, 16.00, 15.90, 16.30, 22.00, 36.50, 42.14, 39.80, 31.20, 24.60, 22.00,
]
LINE_RATINGS = {2: 7.0}  # MVA
VRE_SITES = [
    # node, site, MW per unit of normalized sample
    (64, "W1", 0.3),
    (27, "W2", 0.2),
    (48, "PV1", 2.4),
    (61, "PV2", 0.7),
]
BESS = {
    "node": 2, "e_min": 0.15, "e_max": 1.5, "e0": 0.15, "p_max": 0.5,
    "beta": 1.0, "beta_dis": 0.99, "beta_ch": 0.99, "offer": 25.0, "bid": 20.0,
}
SITES = ("W1", "W2", "PV1", "PV2")


def case_document(
    profile=LOAD_PROFILE,
    lmp=LMP,
    ratings=LINE_RATINGS,
    vre_sites=VRE_SITES,
    bess=BESS,
    epsilon: float = 0.085,
    bid_seed: int = 2019,
    v0: float = 1.03,
) -> dict:
    """Reconstructed 69-node market case as a case-file document."""
    lines = [
        {"id": to, "from": fr, "to": to, "r": r, "x": x, "s_max": ratings.get(to)}
        for fr, to, r, x, _, _ in BRANCHES
    ]
    loads = [
        {"node": node, "p_mw": round(p, 6), "q_mvar": round(q, 6), "segments": [0.5, 0.25, 0.25]}
        for node, (p, q) in sorted(nominal_loads_mw().items())
    ]
    return {
        "name": "ieee69-dam",
        "description": "IEEE 69-node feeder with VRE sites and a BESS; bids drawn from config.bid_seed",
        "base_mva": BASE_MVA,
        "horizon": {"T": len(profile), "dt": 1.0},
        "network": {"v0": v0, "base_kv": BASE_KV, "units": "ohm", "lines": lines},
        "wholesale": {"lmp_p": list(lmp), "q_ratio": 0.3},
        "load_profile": list(profile),
        "loads": loads,
        "generators": [],
        "bess": [dict(bess)] if bess else [],
        "vre": [
            {"node": node, "site": site, "scale": scale, "kappa": 0.3, "zeta": 100.0, "name": site}
            for node, site, scale in vre_sites
        ],
        "config": {
            "epsilon": epsilon,
            "gamma": 0.75,
            "k": 1.0,
            "load_scale": 1.0,
            "bid_seed": bid_seed,
            "q_bid_ratio": 0.3,
            "voll": 1000.0,
            "vre_reactive_mode": "box",
            "loss_voltage": "coupled",
            "allow_export": False,
            "samples": "history69.csv",
            "probe_node": 60,
        },
    }


def synthetic_history(days: int = 30, seed: int = 69, start: str = "2006-06-01") -> np.ndarray:
    """Normalized daily wind/PV samples ``(days, 24, 4)`` for sites ``SITES``.

    Wind: a daily level shared by both sites, a mild night peak and AR(1)
    hourly noise.  PV: a clear-sky bell between 06:00 and 19:00 scaled by a
    daily clearness index shared by both PV sites.
    """
    rng = np.random.default_rng(seed)
    hours = np.arange(24)
    bell = np.clip(np.sin(np.pi * (hours - 6) / 13), 0, None)
    bell[(hours < 6) | (hours > 19)] = 0.0
    out = np.zeros((days, 24, len(SITES)))
    for d in range(days):
        level = rng.beta(2.0, 2.0)
        for m in (0, 1):
            own = np.clip(level + rng.normal(0, 0.12), 0.05, 0.95)
            noise = np.zeros(24)
            for h in range(1, 24):
                noise[h] = 0.8 * noise[h - 1] + rng.normal(0, 0.06)
            out[d, :, m] = np.clip(own * (1 + 0.25 * np.cos(2 * np.pi * (hours - 3) / 24)) + noise, 0, 1)
        clear = rng.uniform(0.35, 1.0)
        for m in (2, 3):
            cloud = np.clip(clear + rng.normal(0, 0.08, 24), 0.1, 1.0)
            out[d, :, m] = np.round(bell * cloud, 6)
    return np.round(out, 6)


def write_history_csv(path, values: np.ndarray, start: str = "2006-06-01") -> None:
    import csv
    from datetime import date, timedelta

    first = date.fromisoformat(start)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "site", "mw"])
        for d in range(values.shape[0]):
            day = first + timedelta(days=d)
            for h in range(values.shape[1]):
                for m, site in enumerate(SITES):
                    w.writerow([f"{day.isoformat()}T{h:02d}:00:00", site, repr(float(values[d, h, m]))])


def write_bundled(directory=None) -> None:
    directory = Path(directory) if directory else Path(__file__).parent
    (directory / "case69.json").write_text(json.dumps(case_document(), indent=1) + "\n", encoding="utf-8")
    write_history_csv(directory / "history69.csv", synthetic_history())


if __name__ == "__main__":
    write_bundled()
