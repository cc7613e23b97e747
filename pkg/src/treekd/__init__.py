"""Tree-based knowledge distillation for molecular property prediction.

Functional-group counts feed decision-tree specialists; their rules are
verbalized into prompts, and predictions are ensembled across the rules of
a random forest.
"""

__version__ = "0.1.0"

from .dataset import MoleculeRecord, PropertySpec, get_property, load_dataset, registry, scaffold_split
from .forest import DecisionTree, RandomForest, TreeParams, fit_forest, fit_specialist, predict_forest, predict_tree
from .inference import DecodingParams, HttpPredictor, StubOracle, rule_consistency, self_consistency
from .molgraph import Molecule, parse_smiles
from .pattern import FeatureVector, FunctionalGroupLibrary, default_library, extract_features, found_fg_names, parse_smarts
from .prompting import Prompt, build_prompt, build_training_set
from .verbalizer import execute_rule, parse_rule, verbalize_rule
