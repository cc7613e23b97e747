"""ADMET property registry, CSV ingestion, and deterministic scaffold splits."""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

from .descriptors import SCAFFOLD_ALGO, ScaffoldKey, murcko_scaffold
from .errors import (
    DataError,
    EmptyDataset,
    InvalidLabel,
    MissingColumn,
    RatioError,
    SmilesError,
)
from .molgraph import parse_smiles
from .rng import Xoshiro256

log = logging.getLogger(__name__)

Task = Literal["classification", "regression"]
Metric = Literal["MAE", "AUROC", "AUPRC", "Spearman"]

_METRIC_TASK: dict[str, Task] = {
    "MAE": "regression",
    "Spearman": "regression",
    "AUROC": "classification",
    "AUPRC": "classification",
}


@dataclass(frozen=True)
class PropertySpec:
    name: str
    category: str
    metric: Metric
    description: str

    @property
    def task(self) -> Task:
        return _METRIC_TASK[self.metric]

    @property
    def higher_is_better(self) -> bool:
        return self.metric != "MAE"

    @property
    def is_classification(self) -> bool:
        return self.task == "classification"


_CYP = (
    "The CYP P450 genes are involved in the formation and breakdown (metabolism) "
    "of various molecules and chemicals within cells. Specifically, "
)
_CYP2D6 = (
    "CYP2D6 is primarily expressed in the liver. It is also highly expressed in "
    "areas of the central nervous system, including the substantia nigra."
)
_CYP3A4 = (
    "CYP3A4 is an important enzyme in the body, mainly found in the liver and in "
    "the intestine. It oxidizes small foreign organic molecules (xenobiotics), such "
    "as toxins or drugs, so that they can be removed from the body."
)
_CYP2C9 = (
    "the CYP P450 2C9 plays a major role in the oxidation of both xenobiotic and "
    "endogenous compounds."
)
_SUBSTRATE = " Substrates are drugs that are metabolized by the enzyme."
_CLEARANCE = (
    "Drug clearance is defined as the volume of plasma cleared of a drug over a "
    "specified time period and it measures the rate at which the active drug is "
    "removed from the body."
)

_REGISTRY: tuple[PropertySpec, ...] = (
    PropertySpec(
        "Caco-2 Permeability", "Absorption", "MAE",
        "The human colon epithelial cancer cell line, Caco-2, is used as an in vitro model "
        "to simulate the human intestinal tissue. The experimental result on the rate of "
        "drug passing through the Caco-2 cells can approximate the rate at which the drug "
        "permeates through the human intestinal tissue.",
    ),
    PropertySpec(
        "HIA", "Absorption", "AUROC",
        "When a drug is orally administered, it needs to be absorbed from the human "
        "gastrointestinal system into the bloodstream of the human body. This ability of "
        "absorption is called human intestinal absorption (HIA) and it is crucial for a "
        "drug to be delivered to the target.",
    ),
    PropertySpec(
        "Pgp Inhibition", "Absorption", "AUROC",
        "P-glycoprotein (Pgp) is an ABC transporter protein involved in intestinal "
        "absorption, drug metabolism, and brain penetration, and its inhibition can "
        "seriously alter a drug's bioavailability and safety. In addition, inhibitors of "
        "Pgp can be used to overcome multidrug resistance.",
    ),
    PropertySpec(
        "Bioavailability", "Absorption", "AUROC",
        "Oral bioavailability is defined as “the rate and extent to which the active "
        "ingredient or active moiety is absorbed from a drug product and becomes available "
        "at the site of action”.",
    ),
    PropertySpec(
        "Lipophilicity", "Absorption", "MAE",
        "Lipophilicity measures the ability of a drug to dissolve in a lipid (e.g. fats, "
        "oils) environment. High lipophilicity often leads to high rate of metabolism, poor "
        "solubility, high turn-over, and low absorption.",
    ),
    PropertySpec(
        "Solubility", "Absorption", "MAE",
        "Aqeuous solubility measures a drug's ability to dissolve in water. Poor water "
        "solubility could lead to slow drug absorptions, inadequate bioavailablity and even "
        "induce toxicity. More than 40% of new chemical entities are not soluble.",
    ),
    PropertySpec(
        "BBB", "Distribution", "AUROC",
        "As a membrane separating circulating blood and brain extracellular fluid, the "
        "blood-brain barrier (BBB) is the protection layer that blocks most foreign drugs. "
        "Thus the ability of a drug to penetrate the barrier to deliver to the site of "
        "action forms a crucial challenge in development of drugs for central nervous "
        "system.",
    ),
    PropertySpec(
        "PPBR", "Distribution", "MAE",
        "The human plasma protein binding rate (PPBR) is expressed as the percentage of a "
        "drug bound to plasma proteins in the blood. This rate strongly affect a drug's "
        "efficiency of delivery. The less bound a drug is, the more efficiently it can "
        "traverse and diffuse to the site of actions.",
    ),
    PropertySpec(
        "VDss", "Distribution", "Spearman",
        "The volume of distribution at steady state (VDss) measures the degree of a drug's "
        "concentration in body tissue compared to concentration in blood. Higher VD "
        "indicates a higher distribution in the tissue and usually indicates the drug with "
        "high lipid solubility, low plasma protein binding rate.",
    ),
    PropertySpec("CYP2D6 Inhibition", "Metabolism", "AUPRC", _CYP + _CYP2D6),
    PropertySpec("CYP3A4 Inhibition", "Metabolism", "AUPRC", _CYP + _CYP3A4),
    PropertySpec("CYP2C9 Inhibition", "Metabolism", "AUPRC", _CYP + _CYP2C9),
    PropertySpec("CYP2D6 Substrate", "Metabolism", "AUPRC", _CYP + _CYP2D6 + _SUBSTRATE),
    PropertySpec("CYP3A4 Substrate", "Metabolism", "AUPRC", _CYP + _CYP3A4 + _SUBSTRATE),
    PropertySpec("CYP2C9 Substrate", "Metabolism", "AUPRC", _CYP + _CYP2C9 + _SUBSTRATE),
    PropertySpec(
        "Half Life", "Excretion", "Spearman",
        "Half life of a drug is the duration for the concentration of the drug in the body "
        "to be reduced by half. It measures the duration of actions of a drug.",
    ),
    PropertySpec("Clearance Microsome", "Excretion", "Spearman", _CLEARANCE),
    PropertySpec("Clearance Hepatocyte", "Excretion", "Spearman", _CLEARANCE),
    PropertySpec(
        "hERG", "Toxicity", "AUROC",
        "Human ether-à-go-go related gene (hERG) is crucial for the coordination of the "
        "heart's beating. Thus, if a drug blocks the hERG, it could lead to severe adverse "
        "effects. Therefore, reliable prediction of hERG liability in the early stages of "
        "drug design is quite important to reduce the risk of cardiotoxicity-related "
        "attritions in the later development stages.",
    ),
    PropertySpec(
        "Ames Mutagenicity", "Toxicity", "AUROC",
        "Mutagenicity means the ability of a drug to induce genetic alterations. Drugs that "
        "can cause damage to the DNA can result in cell death or other severe adverse "
        "effects. Nowadays, the most widely used assay for testing the mutagenicity of "
        "compounds is the Ames experiment which was invented by a professor named Ames. The "
        "Ames test is a short-term bacterial reverse mutation assay detecting a large "
        "number of compounds which can induce genetic damage and frameshift mutations.",
    ),
    PropertySpec(
        "DILI", "Toxicity", "AUROC",
        "Drug-induced liver injury (DILI) is fatal liver disease caused by drugs and it has "
        "been the single most frequent cause of safety-related drug marketing withdrawals "
        "for the past 50 years (e.g. iproniazid, ticrynafen, benoxaprofen).",
    ),
    PropertySpec(
        "LD50", "Toxicity", "MAE",
        "Acute toxicity LD50 measures the most conservative dose that can lead to lethal "
        "adverse effects. The lower the dose, the more lethal of a drug.",
    ),
)

CATEGORIES = ("Absorption", "Distribution", "Metabolism", "Excretion", "Toxicity")


def registry() -> list[PropertySpec]:
    """The 22 TDC ADMET properties, in benchmark table order."""
    return list(_REGISTRY)


def get_property(name: str) -> PropertySpec:
    key = name.casefold()
    for spec in _REGISTRY:
        if spec.name.casefold() == key:
            return spec
    raise KeyError(f"unknown property {name!r}")


@dataclass(frozen=True)
class MoleculeRecord:
    smiles: str
    label: float
    id: int


def _parse_label(raw: str, spec: PropertySpec, row: int) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise InvalidLabel(f"row {row}: label {raw!r} is not a number") from None
    if not math.isfinite(value):
        raise InvalidLabel(f"row {row}: label {raw!r} is not finite")
    if spec.is_classification and value not in (0.0, 1.0):
        raise InvalidLabel(f"row {row}: classification label must be 0 or 1, got {raw!r}")
    return value


def load_dataset(path: str | Path, spec: PropertySpec) -> tuple[list[MoleculeRecord], int]:
    """Read a CSV with ``smiles`` and ``label`` columns (any case).

    Returns the records (ids ``0..n-1`` in file order) and the number of rows
    dropped because their SMILES did not parse.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataset(f"{path}: empty file") from None
        cols = {h.strip().casefold(): i for i, h in enumerate(header)}
        for needed in ("smiles", "label"):
            if needed not in cols:
                raise MissingColumn(f"{path}: no {needed!r} column in header {header}")
        si, li = cols["smiles"], cols["label"]
        records: list[MoleculeRecord] = []
        skipped = 0
        for rowno, row in enumerate(reader, start=2):
            if not row or not any(c.strip() for c in row):
                continue
            smiles = row[si].strip()
            label = _parse_label(row[li].strip(), spec, rowno)
            try:
                parse_smiles(smiles)
            except SmilesError as exc:
                log.debug("row %d skipped: %s", rowno, exc)
                skipped += 1
                continue
            records.append(MoleculeRecord(smiles, label, len(records)))
    if not records:
        raise EmptyDataset(f"{path}: no valid rows ({skipped} skipped)")
    if skipped:
        log.warning("%s: skipped %d row(s) with unparseable SMILES", path, skipped)
    return records, skipped


def save_dataset(records: Sequence[MoleculeRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["smiles", "label"])
        for r in records:
            w.writerow([r.smiles, repr(r.label)])


@dataclass(frozen=True)
class DatasetSplit:
    train: list[MoleculeRecord]
    valid: list[MoleculeRecord]
    test: list[MoleculeRecord]
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2)
    seed: int = 0

    def manifest(self) -> dict:
        return {
            "train": [r.id for r in self.train],
            "valid": [r.id for r in self.valid],
            "test": [r.id for r in self.test],
            "ratios": list(self.ratios),
            "scaffold_algo": SCAFFOLD_ALGO,
        }

    def save_manifest(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.manifest(), indent=2) + "\n", encoding="utf-8")


def split_from_manifest(records: Sequence[MoleculeRecord], manifest: dict) -> DatasetSplit:
    by_id = {r.id: r for r in records}
    try:
        parts = [[by_id[i] for i in manifest[k]] for k in ("train", "valid", "test")]
    except KeyError as exc:
        raise DataError(f"split manifest references unknown record id {exc}") from None
    return DatasetSplit(*parts, ratios=tuple(manifest.get("ratios", (0.7, 0.1, 0.2))))


def _check_ratios(ratios: Sequence[float]) -> tuple[float, float, float]:
    if len(ratios) != 3:
        raise RatioError(f"need three ratios, got {list(ratios)}")
    if any(not math.isfinite(r) or r <= 0 for r in ratios):
        raise RatioError(f"ratios must be positive, got {list(ratios)}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise RatioError(f"ratios must sum to 1, got {sum(ratios)}")
    return (float(ratios[0]), float(ratios[1]), float(ratios[2]))


def scaffold_groups(records: Sequence[MoleculeRecord]) -> dict[ScaffoldKey, list[MoleculeRecord]]:
    groups: dict[ScaffoldKey, list[MoleculeRecord]] = defaultdict(list)
    for r in records:
        groups[murcko_scaffold(parse_smiles(r.smiles))].append(r)
    return groups


def scaffold_split(
    records: Sequence[MoleculeRecord],
    ratios: Sequence[float] = (0.7, 0.1, 0.2),
    seed: int = 0,
    shuffle_ties: bool = False,
) -> DatasetSplit:
    """Assign whole scaffold groups, largest first, to train then valid then test.

    Groups are ordered by (size descending, scaffold hash ascending). A part
    takes groups until it holds at least its share of ``n``. With
    ``shuffle_ties`` the order among equal-size groups is shuffled with
    ``seed``; otherwise ``seed`` is only recorded.
    """
    fracs = _check_ratios(ratios)
    groups = scaffold_groups(records)
    ordered = sorted(groups.items(), key=lambda kv: (-len(kv[1]), kv[0].hash))
    if shuffle_ties:
        rng = Xoshiro256(seed)
        out, i = [], 0
        while i < len(ordered):
            j = i
            while j < len(ordered) and len(ordered[j][1]) == len(ordered[i][1]):
                j += 1
            tier = ordered[i:j]
            for k in range(len(tier) - 1, 0, -1):
                m = rng.randbelow(k + 1)
                tier[k], tier[m] = tier[m], tier[k]
            out.extend(tier)
            i = j
        ordered = out

    n = len(records)
    # integer targets; the epsilon keeps e.g. 0.1 * 30 from rounding up to 4
    train_target = math.ceil(fracs[0] * n - 1e-9)
    valid_target = math.ceil(fracs[1] * n - 1e-9)
    train: list[MoleculeRecord] = []
    valid: list[MoleculeRecord] = []
    test: list[MoleculeRecord] = []
    for _, members in ordered:
        if len(train) < train_target:
            train.extend(members)
        elif len(valid) < valid_target:
            valid.extend(members)
        else:
            test.extend(members)
    for part in (train, valid, test):
        part.sort(key=lambda r: r.id)
    if not valid or not test:
        log.warning(
            "scaffold split is degenerate: train=%d valid=%d test=%d (largest group %d)",
            len(train), len(valid), len(test), max((len(g) for g in groups.values()), default=0),
        )
    return DatasetSplit(train, valid, test, fracs, seed)
