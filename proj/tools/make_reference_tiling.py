"""Writes configs/reference.tiling and its manifest for the simulator's channel set."""
import itertools
import json
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "configs"
ch = ("ir_front ir_left ir_right ir_back light light_left light_right light_back motor_voltage0 motor_voltage1 "
      "motor_voltage2 motor_current0 motor_current1 motor_current2 motor_temp mag_x mag_y last_action").split()
ir, light = ch[0:4], ch[4:8]
volt, cur = ch[8:11], ch[11:14]
lines = ["# Reference tiling: bias + 274 one-dimensional tilings (8 intervals),",
         "# 162 pairwise 4x4 tilings and 20 pairwise 8x8 tilings.",
         "# n = 6065 features, 457 active per step.",
         "# tile1d <channel> <intervals> <tilings> <seed>",
         "# tile2d <channelA> <channelB> <intervals> <tilings> <seed>", ""]
seed = 1; n = 1; act = 1
def add(line, cells, k):
    global seed, n, act
    lines.append(f"{line} {seed}"); seed += 1; n += cells * k; act += k
for c in ch:
    k = 19 if c == "light" else 15
    add(f"tile1d {c} 8 {k}", 8, k)
lines.append("")
pairs = list(itertools.combinations(ir, 2)) + list(itertools.combinations(light, 2))
pairs += [(a, b) for a in ir for b in light]
pairs += [("mag_x", "mag_y")] + [(a, m) for a in ir + light for m in ("mag_x", "mag_y")]
pairs += list(zip(volt, cur)) + list(itertools.combinations(volt, 2)) + list(itertools.combinations(cur, 2))
assert len(pairs) == 54, len(pairs)
for a, b in pairs:
    add(f"tile2d {a} {b} 4 3", 16, 3)
lines.append("")
fine = [("light", "ir_front"), ("light", "ir_left"), ("light", "ir_back"), ("light", "light_left"),
        ("light", "light_right"), ("light", "light_back"), ("light_left", "light_right"), ("mag_x", "mag_y"),
        ("light", "mag_x"), ("light", "mag_y")]
for a, b in fine:
    add(f"tile2d {a} {b} 8 2", 64, 2)
assert (n, act) == (6065, 457), (n, act)
open(OUT / "reference.tiling", "w").write("\n".join(lines) + "\n")
json.dump({"tiling": "reference.tiling", "n": n, "active_per_step": act, "channels": ch},
          open(OUT / "reference.tiling.json", "w"), indent=2)
open(OUT / "reference.tiling.json", "a").write("\n")
print(n, act)
