#!/usr/bin/env python3
"""Writes ieee37.json, the IEEE 37-bus test feeder in the hcap feeder format.

Adaptations to the single-phase-equivalent wye model used by hcap:
  * the substation regulator is replaced by a fixed slack at bus 799 held at
    the mean of the published regulator outputs (taps +7 and +4 at
    0.625 % per step, i.e. 1.034375 pu);
  * each delta-connected spot load is split in half onto its two phases
    (AB -> a, b; BC -> b, c; CA -> c, a), constant power;
  * transformer XFM-1 (775-709) is referred to the 4.8 kV side.
"""
import json
import pathlib

FT_PER_MILE = 5280.0
V_BASE_KV = 4.8
S_BASE_MVA = 3.0
TAP_STEP = 0.00625
SLACK_PU = 1.0 + TAP_STEP * (7 + 4) / 2.0

# Line configurations, ohm per mile: (z11, z22, z33, z12, z13, z23)
CONFIGS = {
    721: ((0.2926, 0.1973), (0.2646, 0.1900), (0.2926, 0.1973),
          (0.0673, -0.0368), (0.0337, -0.0417), (0.0673, -0.0368)),
    722: ((0.4751, 0.2973), (0.4488, 0.2678), (0.4751, 0.2973),
          (0.1629, -0.0326), (0.1234, -0.0607), (0.1629, -0.0326)),
    723: ((1.2936, 0.6713), (1.3022, 0.6326), (1.2936, 0.6713),
          (0.4871, 0.2111), (0.4585, 0.1521), (0.4871, 0.2111)),
    724: ((2.0952, 0.7758), (2.1068, 0.7398), (2.0952, 0.7758),
          (0.5204, 0.2738), (0.4926, 0.2123), (0.5204, 0.2738)),
}

LINES = [
    (701, 702, 960, 722), (702, 705, 400, 724), (702, 713, 360, 723),
    (702, 703, 1320, 722), (703, 727, 240, 724), (703, 730, 600, 723),
    (704, 714, 80, 724), (704, 720, 800, 723), (705, 742, 320, 724),
    (705, 712, 240, 724), (706, 725, 280, 724), (707, 724, 760, 724),
    (707, 722, 120, 724), (708, 733, 320, 723), (708, 732, 320, 724),
    (709, 731, 600, 723), (709, 708, 320, 723), (710, 735, 200, 724),
    (710, 736, 1280, 724), (711, 741, 400, 723), (711, 740, 200, 724),
    (713, 704, 520, 723), (714, 718, 520, 724), (720, 707, 920, 724),
    (720, 706, 600, 723), (727, 744, 280, 723), (730, 709, 200, 723),
    (733, 734, 560, 723), (734, 737, 640, 723), (734, 710, 520, 724),
    (737, 738, 400, 723), (738, 711, 400, 723), (744, 728, 200, 724),
    (744, 729, 280, 724), (799, 701, 1850, 721),
]

# XFM-1: 500 kVA, 4.8/0.48 kV, R = 0.09 %, X = 1.81 %
XFM_FROM, XFM_TO = 709, 775
XFM_KVA, XFM_R_PCT, XFM_X_PCT = 500.0, 0.09, 1.81

# Delta spot loads: bus -> ((kW, kvar) AB, BC, CA)
LOADS = {
    701: ((140, 70), (140, 70), (350, 175)),
    712: ((0, 0), (0, 0), (85, 40)),
    713: ((0, 0), (0, 0), (85, 40)),
    714: ((17, 8), (21, 10), (0, 0)),
    718: ((85, 40), (0, 0), (0, 0)),
    720: ((0, 0), (0, 0), (85, 40)),
    722: ((0, 0), (140, 70), (21, 10)),
    724: ((0, 0), (42, 21), (0, 0)),
    725: ((0, 0), (42, 21), (0, 0)),
    727: ((0, 0), (0, 0), (42, 21)),
    728: ((42, 21), (42, 21), (42, 21)),
    729: ((42, 21), (0, 0), (0, 0)),
    730: ((0, 0), (0, 0), (85, 40)),
    731: ((0, 0), (85, 40), (0, 0)),
    732: ((0, 0), (0, 0), (42, 21)),
    733: ((85, 40), (0, 0), (0, 0)),
    734: ((0, 0), (0, 0), (42, 21)),
    735: ((0, 0), (0, 0), (85, 40)),
    736: ((0, 0), (42, 21), (0, 0)),
    737: ((140, 70), (0, 0), (0, 0)),
    738: ((126, 62), (0, 0), (0, 0)),
    740: ((0, 0), (0, 0), (85, 40)),
    741: ((0, 0), (0, 0), (42, 21)),
    742: ((8, 4), (85, 40), (0, 0)),
    744: ((42, 21), (0, 0), (0, 0)),
}
DELTA_PHASES = (("a", "b"), ("b", "c"), ("c", "a"))


def line_matrix(config, feet):
    z11, z22, z33, z12, z13, z23 = CONFIGS[config]
    full = [[z11, z12, z13], [z12, z22, z23], [z13, z23, z33]]
    miles = feet / FT_PER_MILE
    return [[[round(r * miles, 10), round(x * miles, 10)] for r, x in row] for row in full]


def transformer_matrix():
    z_base = V_BASE_KV ** 2 / (XFM_KVA / 1000.0)
    r = XFM_R_PCT / 100.0 * z_base
    x = XFM_X_PCT / 100.0 * z_base
    return [[[r, x] if i == j else [0.0, 0.0] for j in range(3)] for i in range(3)]


def wye_loads(delta):
    out = {"a": [0.0, 0.0], "b": [0.0, 0.0], "c": [0.0, 0.0]}
    for (kw, kvar), (p1, p2) in zip(delta, DELTA_PHASES):
        for ph in (p1, p2):
            out[ph][0] += kw / 2.0
            out[ph][1] += kvar / 2.0
    return {ph: v for ph, v in out.items() if v != [0.0, 0.0]}


def build():
    bus_ids = sorted({b for f, t, _, _ in LINES for b in (f, t)} | {XFM_TO})
    buses = []
    for bid in bus_ids:
        bus = {"id": bid}
        if bid in LOADS:
            bus["loads"] = wye_loads(LOADS[bid])
        buses.append(bus)
    branches = [{"from": f, "to": t, "z_ohm": line_matrix(cfg, ft)} for f, t, ft, cfg in LINES]
    branches.append({"from": XFM_FROM, "to": XFM_TO, "z_ohm": transformer_matrix()})
    return {
        "name": "IEEE 37-bus test feeder (wye equivalent)",
        "s_base_mva": S_BASE_MVA,
        "v_base_kv": V_BASE_KV,
        "slack_bus": 799,
        "slack_voltage_pu": SLACK_PU,
        "buses": buses,
        "branches": branches,
    }


if __name__ == "__main__":
    out = pathlib.Path(__file__).with_name("ieee37.json")
    out.write_text(json.dumps(build(), indent=2) + "\n")
    print(f"wrote {out}")
