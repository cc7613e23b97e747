"""Regenerate the bundled mini datasets with planted functional-group labels.

Molecules are scaffold x substituent combinations. Labels come from fixed
rules over the bundled library's counts, so a tree can recover them:

  Ames (classification): positive iff the molecule has a nitro group, an
      aniline NH2 or an azo link.
  Caco-2 (regression): -5.0 + 0.35*methyl - 0.55*hydroxyl
      - 0.8*carboxylic acid + 0.25*aryl halide - 0.3*amide.

Then about 10% of Ames labels are flipped and Caco-2 values get Gaussian
noise, so the models do not score perfectly.

Usage: python scripts/make_mini_dataset.py [--out src/treekd/data] [--seed 1]
"""

from __future__ import annotations

import argparse
import random
from pathlib import Path

from treekd.dataset import MoleculeRecord, save_dataset
from treekd.molgraph import parse_smiles
from treekd.pattern import default_library, extract_features

# "{}" marks the attachment points, filled left to right.
SCAFFOLDS = [
    "c1({})ccc({})cc1",
    "c1({})ccc({})nc1",
    "c1({})ccc2cc({})ccc2c1",
    "c1({})ccc(-c2ccc({})cc2)cc1",
    "c1({})ccc({})s1",
    "c1({})ccc({})o1",
    "C1({})CCC({})CC1",
    "c1({})ccc(C(=O)Nc2ccc({})cc2)cc1",
    "c1({})ccc(Oc2ccc({})cc2)cc1",
    "c1({})cnc2ccc({})cc2c1",
    "C1({})CCN(C({}))CC1",
    "c1({})ccc(CCc2ccccc2({}))cc1",
    "c1({})cc({})ncn1",
    "C1({})CCC({})C1",
    "c1({})ccc2c(c1)CCC2({})",
    "c1({})ccc(-c2ncccc2({}))cc1",
]
# acyclic substituents only, so each template is exactly one scaffold group
SUBSTITUENTS = ["", "C", "O", "Cl", "F", "N", "[N+](=O)[O-]", "C(=O)O", "OC", "C#N", "N=NC", "C(=O)N", "CC"]

AMES_ALERTS = ("nitro", "aniline", "azo")
FLIP_RATE = 0.1
NOISE_SD = 0.15
CACO2 = {"methyl": 0.35, "hydroxyl": -0.55, "carboxylic acid": -0.8, "aryl halide": 0.25, "amide": -0.3}


def fill(template: str, subs: tuple[str, str]) -> str:
    out = template.format(*subs)
    return out.replace("()", "")


def candidates(rng: random.Random, per_scaffold: dict[str, int]) -> list[str]:
    seen = set()
    out = []
    for template, k in per_scaffold.items():
        tries = 0
        got = 0
        while got < k and tries < 200:
            tries += 1
            smi = fill(template, (rng.choice(SUBSTITUENTS), rng.choice(SUBSTITUENTS)))
            if smi in seen:
                continue
            parse_smiles(smi)
            seen.add(smi)
            out.append(smi)
            got += 1
    return out


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src" / "treekd" / "data"))
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    # uneven group sizes so the scaffold split has large and small groups
    sizes = [10, 8, 7, 6, 5, 4, 4, 3, 3, 2, 2, 2, 2, 1, 1, 1]
    smiles = candidates(rng, dict(zip(SCAFFOLDS, sizes)))
    rng.shuffle(smiles)
    lib = default_library()
    idx = lib.index_of
    ames, caco = [], []
    for i, smi in enumerate(smiles):
        v = extract_features(parse_smiles(smi), lib)
        pos = any(v[idx[name]] > 0 for name in AMES_ALERTS)
        if rng.random() < FLIP_RATE:
            pos = not pos
        ames.append(MoleculeRecord(smi, 1.0 if pos else 0.0, i))
        y = -5.0 + sum(w * v[idx[name]] for name, w in CACO2.items()) + rng.gauss(0.0, NOISE_SD)
        caco.append(MoleculeRecord(smi, round(y, 3), i))
    out = Path(args.out)
    save_dataset(ames, out / "mini_ames.csv")
    save_dataset(caco, out / "mini_caco2.csv")
    print(f"{len(smiles)} molecules; {sum(r.label for r in ames):.0f} Ames positives -> {out}")


if __name__ == "__main__":
    main()
