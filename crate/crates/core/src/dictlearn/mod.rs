//! Tree-structured orthonormal dictionary learning.

pub mod container;
pub mod learn;
pub mod prox;

pub use container::{load_dictionary, read_dictionary, save_dictionary, write_dictionary, StoredDictionary};
pub use learn::{
    code_columns, learn, learn_to_sparsity, mean_sparsity, objective, search_lambda, sparse_code, update_dictionary, DictionaryUpdate, Init,
    LearnConfig, LearnReport, Learned, TrainingSet, WeightScheme,
};
pub use prox::{project_l1_ball, tree_group_penalty, tree_prox, GroupNorm};
