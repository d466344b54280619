pub mod boost;
pub mod forest;
pub mod impurity;
pub mod tree;

pub use boost::{fit_boosting, BoostConfig, BoostLoss, BoostedModel, BoostingLearner};
pub use forest::{fit_forest, Forest, ForestConfig, ForestLearner, ImportanceRow};
pub use impurity::{impurity, Impurity};
pub use tree::{best_split, fit_tree, grow_tree, FittedTree, Node, Split, Tree, TreeConfig, TreeLearner};
