"""Regenerate the bundled feeder documents.

    python3 scripts/make_feeders.py

Writes case33.json, ieee13_simplified.json and four_bus.json into
src/dsse/data/feeders. Impedances are in ohms, shunt susceptances in
siemens; the loader converts to per-unit.
"""

import json
import math
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "dsse" / "data" / "feeders"


def dump(doc, name):
    with open(OUT / name, "w") as fh:
        json.dump(doc, fh, indent=1)


# ---- 33 bus (Baran & Wu, as distributed with MATPOWER case33bw)
br = """1 2 0.0922 0.0470
2 3 0.4930 0.2511
3 4 0.3660 0.1864
4 5 0.3811 0.1941
5 6 0.8190 0.7070
6 7 0.1872 0.6188
7 8 0.7114 0.2351
8 9 1.0300 0.7400
9 10 1.0440 0.7400
10 11 0.1966 0.0650
11 12 0.3744 0.1238
12 13 1.4680 1.1550
13 14 0.5416 0.7129
14 15 0.5910 0.5260
15 16 0.7463 0.5450
16 17 1.2890 1.7210
17 18 0.7320 0.5740
2 19 0.1640 0.1565
19 20 1.5042 1.3554
20 21 0.4095 0.4784
21 22 0.7089 0.9373
3 23 0.4512 0.3083
23 24 0.8980 0.7091
24 25 0.8960 0.7011
6 26 0.2030 0.1034
26 27 0.2842 0.1447
27 28 1.0590 0.9337
28 29 0.8042 0.7006
29 30 0.5075 0.2585
30 31 0.9744 0.9630
31 32 0.3105 0.3619
32 33 0.3410 0.5302"""
ld = """2 100 60
3 90 40
4 120 80
5 60 30
6 60 20
7 200 100
8 200 100
9 60 20
10 60 20
11 45 30
12 60 35
13 60 35
14 120 80
15 60 10
16 60 20
17 60 20
18 90 40
19 90 40
20 90 40
21 90 40
22 90 40
23 90 50
24 420 200
25 420 200
26 60 25
27 60 25
28 60 20
29 120 70
30 200 600
31 150 70
32 210 100
33 60 40"""
doc = {
  "name": "case33",
  "comment": "Standard 33-bus radial feeder (Baran & Wu 1989, MATPOWER case33bw). Balanced; modeled as a single-phase positive-sequence equivalent with one node per bus. Loads are the three-phase totals of the standard case.",
  "base_kv": 12.66, "base_mva": 10.0, "reference_bus": "1", "reference_magnitude": 1.0,
  "buses": [{"name": str(i), "phases": ["A"]} for i in range(1, 34)],
  "branches": [], "loads": []}
for line in br.splitlines():
    f, t, r, x = line.split()
    doc["branches"].append({"from": f, "to": t, "phases": ["A"], "impedance": [[float(r), float(x)]]})
for line in ld.splitlines():
    b, p, q = line.split()
    doc["loads"].append({"bus": b, "phase": "A", "p_kw": float(p), "q_kvar": float(q)})
dump(doc, "case33.json")

# ---- IEEE 13 (simplified)
mile = 5280.0
Z = {
 "601": ("ABC", [[0.3465+1.0179j, 0.1560+0.5017j, 0.1580+0.4236j],[0.1560+0.5017j, 0.3375+1.0478j, 0.1535+0.3849j],[0.1580+0.4236j, 0.1535+0.3849j, 0.3414+1.0348j]],
         [[6.2998,-1.9958,-1.2595],[-1.9958,5.9597,-0.7417],[-1.2595,-0.7417,5.6386]]),
 "602": ("ABC", [[0.7526+1.1814j, 0.1580+0.4236j, 0.1560+0.5017j],[0.1580+0.4236j, 0.7475+1.1983j, 0.1535+0.3849j],[0.1560+0.5017j, 0.1535+0.3849j, 0.7436+1.2112j]],
         [[5.6990,-1.0817,-1.6905],[-1.0817,5.1795,-0.6588],[-1.6905,-0.6588,5.4246]]),
 "603": ("BC", [[1.3294+1.3471j, 0.2066+0.4591j],[0.2066+0.4591j, 1.3238+1.3569j]],
         [[4.7097,-0.8999],[-0.8999,4.6658]]),
 "604": ("AC", [[1.3238+1.3569j, 0.2066+0.4591j],[0.2066+0.4591j, 1.3294+1.3471j]],
         [[4.6658,-0.8999],[-0.8999,4.7097]]),
 "605": ("C", [[1.3292+1.3475j]], [[4.5193]]),
 "606": ("ABC", [[0.7982+0.4463j, 0.3192+0.0328j, 0.2849-0.0143j],[0.3192+0.0328j, 0.7891+0.4041j, 0.3192+0.0328j],[0.2849-0.0143j, 0.3192+0.0328j, 0.7982+0.4463j]],
         [[96.8897,0,0],[0,96.8897,0],[0,0,96.8897]]),
 "607": ("A", [[1.3425+0.5124j]], [[88.9912]]),
}
buses = [("650","ABC"),("632","ABC"),("670","ABC"),("671","ABC"),("680","ABC"),("633","ABC"),("634","ABC"),
         ("645","BC"),("646","BC"),("692","ABC"),("675","ABC"),("684","AC"),("611","C"),("652","A")]
lines = [("650","632",2000,"601"),("632","670",667,"601"),("670","671",1333,"601"),("671","680",1000,"601"),
         ("632","633",500,"602"),("632","645",500,"603"),("645","646",300,"603"),("692","675",800,"606"),
         ("671","684",300,"604"),("684","611",300,"605"),("684","652",800,"607")]
d13 = {"name": "ieee13_simplified",
 "comment": "IEEE 13-node test feeder, simplified: substation transformer and regulator replaced by a fixed 1.05 p.u. reference at bus 650; switch 671-692 closed (small series impedance); distributed load 632-671 lumped at bus 670; XFM-1 (633-634) as series impedance referred to the 4.16 kV side; all loads constant-PQ wye, delta loads assigned to their leading phase; shunt capacitor banks at 675 and 611 kept as fixed shunt admittances. Per-unit base: 4.16 kV line-to-line, 5 MVA three-phase, so node bases are 2.4018 kV and 1.6667 MVA.",
 "base_kv": round(4.16/math.sqrt(3), 7), "base_mva": 5.0/3.0, "reference_bus": "650", "reference_magnitude": 1.05,
 "buses": [{"name": b, "phases": list(p)} for b, p in buses], "branches": [], "loads": []}
for f, t, ft, cfg in lines:
    ph, z, b = Z[cfg]
    L = ft/mile
    d13["branches"].append({"from": f, "to": t, "phases": list(ph), "config": cfg, "length_ft": ft,
        "impedance": [[round((zz*L).real, 8), round((zz*L).imag, 8)] for row in z for zz in row],
        "shunt": [[0.0, round(bb*1e-6*L, 12)] for row in b for bb in row]})
# switch
d13["branches"].append({"from": "671", "to": "692", "phases": ["A","B","C"], "config": "switch",
    "impedance": [[0.001,0.001] if i==j else [0.0,0.0] for i in range(3) for j in range(3)]})
# transformer 500 kVA, z = 1.1% + j2% on own base, referred to 4.16 kV side
zb = 4.16**2/5.0
zt = (0.011+0.02j)*(5.0/0.5)*zb
d13["branches"].append({"from": "633", "to": "634", "phases": ["A","B","C"], "config": "XFM-1",
    "impedance": [[round(zt.real,8), round(zt.imag,8)] if i==j else [0.0,0.0] for i in range(3) for j in range(3)]})
loads = [("634","A",160,110),("634","B",120,90),("634","C",120,90),("645","B",170,125),("646","B",230,132),
         ("652","A",128,86),("671","A",385,220),("671","B",385,220),("671","C",385,220),("675","A",485,190),
         ("675","B",68,60),("675","C",290,212),("692","C",170,151),("611","C",170,80),
         ("670","A",17,10),("670","B",66,38),("670","C",117,68)]
for b, p, P, Q in loads:
    d13["loads"].append({"bus": b, "phase": p, "p_kw": P, "q_kvar": Q})
d13["shunts"] = [{"bus": "675", "phase": p, "q_kvar": 200} for p in "ABC"] + [{"bus": "611", "phase": "C", "q_kvar": 100}]
dump(d13, "ieee13_simplified.json")

# ---- 4-bus unbalanced toy feeder
d4 = {"name": "four_bus", "comment": "Small unbalanced three-phase test feeder: 4 buses in a line using IEEE configuration 601 line impedances, a two-phase lateral and unbalanced spot loads.",
 "base_kv": round(4.16/math.sqrt(3), 7), "base_mva": 5.0/3.0, "reference_bus": "1", "reference_magnitude": 1.0,
 "buses": [{"name":"1","phases":list("ABC")},{"name":"2","phases":list("ABC")},{"name":"3","phases":list("ABC")},{"name":"4","phases":list("AC")}],
 "branches": [], "loads": []}
for f, t, ft in [("1","2",2000),("2","3",2500)]:
    ph, z, b = Z["601"]; L = ft/mile
    d4["branches"].append({"from": f, "to": t, "phases": list(ph), "impedance": [[round((zz*L).real,8), round((zz*L).imag,8)] for row in z for zz in row]})
ph, z, b = Z["604"]; L = 1000/mile
d4["branches"].append({"from": "2", "to": "4", "phases": ["A","C"], "impedance": [[round((zz*L).real,8), round((zz*L).imag,8)] for row in z for zz in row]})
for b, p, P, Q in [("2","A",100,50),("2","B",150,70),("2","C",80,40),("3","A",400,200),("3","B",300,150),("3","C",350,160),("4","A",120,60),("4","C",200,90)]:
    d4["loads"].append({"bus": b, "phase": p, "p_kw": P, "q_kvar": Q})
dump(d4, "four_bus.json")
