from .parsing import ParseEnv, ParserState, arc_eager_step, make_parse_corpus, uas
from .point_mass import ContinuousEnv, LqrExpert, make_point_mass
from .tabular import hard_bandit_means, make_bandit_rows, make_random_tabular
from .tree import TreeSpec, make_binary_tree, random_leaf_means, tree_expert

__all__ = [
    "ContinuousEnv", "LqrExpert", "ParseEnv", "ParserState", "TreeSpec",
    "arc_eager_step", "hard_bandit_means", "make_bandit_rows", "make_binary_tree",
    "make_parse_corpus", "make_point_mass", "make_random_tabular", "random_leaf_means",
    "tree_expert", "uas",
]
