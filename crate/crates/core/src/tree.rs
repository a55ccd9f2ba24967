//! Balanced d-ary coefficient trees, their node-plus-descendants group
//! structure, and tree-sparse vectors.
//!
//! Nodes are stored in heap order with 0-based indices: the root is node 0
//! and the children of node `i` are `d*i + 1 ..= d*i + d`. Every level is
//! full, so parent/child/descendant queries are pure index arithmetic.

use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};

/// Anything that can drive a top-down significance traversal: a set of
/// starting nodes and a child relation.
pub trait CoefficientTree {
    fn node_count(&self) -> usize;

    /// Nodes that are always measured first.
    fn roots(&self) -> Vec<usize>;

    /// Appends the children of `node` to `out`.
    fn push_children(&self, node: usize, out: &mut Vec<usize>);
}

/// Complete balanced rooted tree of degree `d` with `L` full levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeTopology {
    degree: usize,
    depth: usize,
    len: usize,
}

/// Builds the complete `degree`-ary tree with `depth` levels.
pub fn make_tree(degree: usize, depth: usize) -> Result<TreeTopology> {
    TreeTopology::new(degree, depth)
}

impl TreeTopology {
    pub fn new(degree: usize, depth: usize) -> Result<Self> {
        if degree < 2 {
            return Err(Error::InvalidTree(format!("degree must be >= 2, got {degree}")));
        }
        if depth < 1 {
            return Err(Error::InvalidTree(format!("depth must be >= 1, got {depth}")));
        }
        let overflow = || Error::InvalidTree(format!("node count overflows for d={degree}, L={depth}"));
        let mut len: usize = 0;
        let mut width: usize = 1;
        for level in 0..depth {
            len = len.checked_add(width).ok_or_else(overflow)?;
            if level + 1 < depth {
                width = width.checked_mul(degree).ok_or_else(overflow)?;
            }
        }
        // child arithmetic d*i + d must stay representable for every node
        len.checked_mul(degree).and_then(|x| x.checked_add(degree)).ok_or_else(overflow)?;
        Ok(Self { degree, depth, len })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of levels `L`.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Node count `p`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn children(&self, node: usize) -> Range<usize> {
        let first = self.degree * node + 1;
        if first >= self.len {
            self.len..self.len
        } else {
            first..first + self.degree
        }
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        if node == 0 || node >= self.len {
            None
        } else {
            Some((node - 1) / self.degree)
        }
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.degree * node + 1 >= self.len
    }

    /// First node index on `level` (root level is 0).
    pub fn level_start(&self, level: usize) -> usize {
        (self.degree.pow(level as u32) - 1) / (self.degree - 1)
    }

    pub fn level_range(&self, level: usize) -> Range<usize> {
        self.level_start(level)..self.level_start(level + 1)
    }

    pub fn level_of(&self, node: usize) -> usize {
        let mut level = 0;
        let mut n = node;
        while n > 0 {
            n = (n - 1) / self.degree;
            level += 1;
        }
        level
    }

    /// Node count of the subtree rooted at `node`.
    pub fn subtree_size(&self, node: usize) -> usize {
        let levels = self.depth - self.level_of(node);
        (self.degree.pow(levels as u32) - 1) / (self.degree - 1)
    }

    /// The subtree rooted at `node` as one contiguous index range per level.
    pub fn subtree_ranges(&self, node: usize) -> Vec<Range<usize>> {
        let levels = self.depth - self.level_of(node);
        let mut ranges = Vec::with_capacity(levels);
        let mut first = node;
        let mut width = 1;
        for _ in 0..levels {
            ranges.push(first..first + width);
            first = self.degree * first + 1;
            width *= self.degree;
        }
        ranges
    }

    /// `node` together with all of its descendants, in ascending order.
    pub fn subtree(&self, node: usize) -> Vec<usize> {
        self.subtree_ranges(node).into_iter().flatten().collect()
    }
}

impl CoefficientTree for TreeTopology {
    fn node_count(&self) -> usize {
        self.len
    }

    fn roots(&self) -> Vec<usize> {
        vec![0]
    }

    fn push_children(&self, node: usize, out: &mut Vec<usize>) {
        out.extend(self.children(node));
    }
}

/// The `p` node-plus-descendants groups of a tree with their weights,
/// stored in an order where every group follows all groups nested in it.
#[derive(Debug, Clone)]
pub struct GroupSet {
    tree: TreeTopology,
    order: Vec<usize>,
    weights: Vec<f64>,
}

/// Groups of `tree` ordered deepest-first (ties by index). `weights` is
/// indexed by node; `None` means unit weights.
pub fn groups_of(tree: &TreeTopology, weights: Option<&[f64]>) -> Result<GroupSet> {
    let order = (0..tree.depth()).rev().flat_map(|level| tree.level_range(level)).collect();
    GroupSet::from_order(tree, order, weights)
}

impl GroupSet {
    /// Builds a group set with an explicit processing order. The order must
    /// visit every group after all of the groups nested inside it.
    pub fn from_order(tree: &TreeTopology, order: Vec<usize>, weights: Option<&[f64]>) -> Result<Self> {
        let p = tree.len();
        let weights = match weights {
            Some(w) => {
                if w.len() != p {
                    return Err(Error::DimensionMismatch { expected: p, found: w.len() });
                }
                if let Some(bad) = w.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
                    return Err(Error::arg(format!("group weights must be finite and nonnegative, got {bad}")));
                }
                w.to_vec()
            }
            None => vec![1.0; p],
        };
        if order.len() != p {
            return Err(Error::arg(format!("group order has {} entries, tree has {p} nodes", order.len())));
        }
        let mut position = vec![usize::MAX; p];
        for (pos, &node) in order.iter().enumerate() {
            if node >= p || position[node] != usize::MAX {
                return Err(Error::arg("group order is not a permutation of the tree nodes"));
            }
            position[node] = pos;
        }
        for node in 1..p {
            let parent = tree.parent(node).unwrap();
            if position[node] > position[parent] {
                return Err(Error::arg(format!(
                    "group order is not deepest-first: group {node} comes after its enclosing group {parent}"
                )));
            }
        }
        Ok(Self {
            tree: tree.clone(),
            order,
            weights,
        })
    }

    pub fn tree(&self) -> &TreeTopology {
        &self.tree
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Group owners (tree nodes) in processing order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn weight(&self, node: usize) -> f64 {
        self.weights[node]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Member ranges of the group owned by `node`.
    pub fn ranges(&self, node: usize) -> Vec<Range<usize>> {
        self.tree.subtree_ranges(node)
    }

    pub fn members(&self, node: usize) -> Vec<usize> {
        self.tree.subtree(node)
    }
}

/// A coefficient vector whose support is a rooted connected subtree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSparseVector {
    values: Vec<f64>,
    support: Vec<usize>,
}

impl TreeSparseVector {
    /// Wraps `values`, taking its nonzero entries as the support.
    pub fn from_values(values: Vec<f64>, tree: &TreeTopology) -> Result<Self> {
        if values.len() != tree.len() {
            return Err(Error::DimensionMismatch {
                expected: tree.len(),
                found: values.len(),
            });
        }
        if !is_tree_sparse(&values, tree, 0.0) {
            return Err(Error::arg("nonzero entries do not form a rooted connected subtree"));
        }
        let support = (0..values.len()).filter(|&i| values[i] != 0.0).collect();
        Ok(Self { values, support })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Support indices in ascending order.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn k(&self) -> usize {
        self.support.len()
    }

    /// Smallest magnitude on the support; `+inf` for an empty support.
    pub fn alpha_min(&self) -> f64 {
        self.support.iter().map(|&i| self.values[i].abs()).fold(f64::INFINITY, f64::min)
    }

    /// Sum of squares over the support.
    pub fn energy(&self) -> f64 {
        self.support.iter().map(|&i| self.values[i] * self.values[i]).sum()
    }
}

/// True iff `{i : |v[i]| > tol}` is empty or a rooted connected subtree.
pub fn is_tree_sparse(v: &[f64], tree: &TreeTopology, tol: f64) -> bool {
    if v.len() != tree.len() {
        return false;
    }
    (1..v.len()).all(|i| v[i].abs() <= tol || v[tree.parent(i).unwrap()].abs() > tol)
}

/// Draws a k-tree-sparse vector by growing a subtree from the root, adding
/// a uniformly chosen frontier node at each step. Magnitudes are uniform on
/// `[amp_min, amp_max]` with independent random signs.
pub fn random_tree_sparse<R: Rng + ?Sized>(tree: &TreeTopology, k: usize, amp_min: f64, amp_max: f64, rng: &mut R) -> Result<TreeSparseVector> {
    if k < 1 || k > tree.len() {
        return Err(Error::arg(format!("sparsity k={k} must lie in 1..={}", tree.len())));
    }
    if !(amp_min > 0.0) || !(amp_max >= amp_min) || !amp_max.is_finite() {
        return Err(Error::arg(format!("need 0 < amp_min <= amp_max, got [{amp_min}, {amp_max}]")));
    }
    let mut support = Vec::with_capacity(k);
    let mut frontier = vec![tree.root()];
    while support.len() < k {
        let pick = rng.random_range(0..frontier.len());
        let node = frontier.swap_remove(pick);
        support.push(node);
        frontier.extend(tree.children(node));
    }
    support.sort_unstable();

    let mut values = vec![0.0; tree.len()];
    for &i in &support {
        let mag = if amp_max > amp_min {
            rng.random_range(amp_min..=amp_max)
        } else {
            amp_min
        };
        values[i] = if rng.random_bool(0.5) { mag } else { -mag };
    }
    Ok(TreeSparseVector { values, support })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProjectionMode {
    /// Maximum captured energy via dynamic programming over subtree budgets.
    #[default]
    Exact,
    /// Repeatedly adds the frontier node of largest magnitude.
    Greedy,
}

/// Restricts `v` to a rooted connected support of at most `k` nodes.
///
/// After selection, nodes whose selected subtree carries no energy are
/// dropped, so the returned support is the rooted closure of the kept
/// nonzeros.
pub fn tree_project(v: &[f64], tree: &TreeTopology, k: usize, mode: ProjectionMode) -> Result<TreeSparseVector> {
    if v.len() != tree.len() {
        return Err(Error::DimensionMismatch {
            expected: tree.len(),
            found: v.len(),
        });
    }
    if k < 1 || k > tree.len() {
        return Err(Error::arg(format!("sparsity k={k} must lie in 1..={}", tree.len())));
    }
    let selected = match mode {
        ProjectionMode::Exact => select_exact(v, tree, k),
        ProjectionMode::Greedy => select_greedy(v, tree, k),
    };
    Ok(restrict_pruned(v, tree, selected))
}

fn restrict_pruned(v: &[f64], tree: &TreeTopology, mut selected: Vec<bool>) -> TreeSparseVector {
    let p = tree.len();
    // children have larger indices, so a reverse sweep sees them first
    let mut alive = vec![false; p];
    for i in (0..p).rev() {
        if selected[i] {
            alive[i] = v[i] != 0.0 || tree.children(i).any(|c| alive[c]);
        }
    }
    for i in 0..p {
        selected[i] &= alive[i];
    }
    let mut values = vec![0.0; p];
    let mut support = Vec::new();
    for i in 0..p {
        if selected[i] {
            values[i] = v[i];
            support.push(i);
        }
    }
    TreeSparseVector { values, support }
}

fn select_exact(v: &[f64], tree: &TreeTopology, k: usize) -> Vec<bool> {
    let p = tree.len();
    // best[i][b]: max energy of a rooted subtree at i with exactly b nodes
    let mut best: Vec<Vec<f64>> = vec![Vec::new(); p];
    // choice[i][c][b]: budget handed to the c-th child when the first c+1
    // children share b nodes
    let mut choice: Vec<Vec<Vec<usize>>> = vec![Vec::new(); p];

    for i in (0..p).rev() {
        let cap_i = k.min(tree.subtree_size(i));
        let mut merged = vec![0.0];
        let mut node_choice = Vec::with_capacity(tree.degree());
        for c in tree.children(i) {
            let child = &best[c];
            let cap = (merged.len() - 1 + child.len() - 1).min(cap_i - 1);
            let mut next = vec![f64::NEG_INFINITY; cap + 1];
            let mut pick = vec![0usize; cap + 1];
            for (b, slot) in next.iter_mut().enumerate() {
                let t_lo = b.saturating_sub(merged.len() - 1);
                let t_hi = b.min(child.len() - 1);
                for t in t_lo..=t_hi {
                    let e = merged[b - t] + child[t];
                    if e > *slot {
                        *slot = e;
                        pick[b] = t;
                    }
                }
            }
            merged = next;
            node_choice.push(pick);
        }
        let e = v[i] * v[i];
        let mut table = Vec::with_capacity(merged.len() + 1);
        table.push(0.0);
        table.extend(merged.iter().map(|m| e + m));
        best[i] = table;
        choice[i] = node_choice;
    }

    let mut selected = vec![false; p];
    let mut stack = vec![(0usize, k.min(best[0].len() - 1))];
    while let Some((node, budget)) = stack.pop() {
        if budget == 0 {
            continue;
        }
        selected[node] = true;
        let mut remaining = budget - 1;
        let children: Vec<usize> = tree.children(node).collect();
        for (ci, &c) in children.iter().enumerate().rev() {
            let t = choice[node][ci][remaining];
            remaining -= t;
            if t > 0 {
                stack.push((c, t));
            }
        }
    }
    selected
}

fn select_greedy(v: &[f64], tree: &TreeTopology, k: usize) -> Vec<bool> {
    let mut selected = vec![false; tree.len()];
    let mut frontier = vec![tree.root()];
    for _ in 0..k {
        let Some((pos, _)) = frontier
            .iter()
            .enumerate()
            .max_by(|a, b| v[*a.1].abs().total_cmp(&v[*b.1].abs()).then(b.1.cmp(a.1)))
        else {
            break;
        };
        let node = frontier.swap_remove(pos);
        selected[node] = true;
        frontier.extend(tree.children(node));
    }
    selected
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn binary_depth_three() {
        let t = make_tree(2, 3).unwrap();
        assert_eq!(t.len(), 7);
        assert_eq!(t.children(0), 1..3);
        assert_eq!(t.children(2), 5..7);
        assert!(t.children(5).is_empty());
    }

    #[test]
    fn binary_depth_seven_has_127_nodes() {
        assert_eq!(make_tree(2, 7).unwrap().len(), 127);
    }

    #[test]
    fn ternary_depth_two() {
        let t = make_tree(3, 2).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t.children(0).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(make_tree(1, 3).is_err());
        assert!(make_tree(2, 0).is_err());
        assert!(make_tree(2, 200).is_err());
        assert!(make_tree(usize::MAX / 2, 3).is_err());
    }

    #[test]
    fn parent_child_inverse() {
        for d in 2..5 {
            for l in 1..6 {
                let t = make_tree(d, l).unwrap();
                let mut count = 0;
                for lvl in 0..l {
                    count += d.pow(lvl as u32);
                }
                assert_eq!(count, t.len());
                for i in 0..t.len() {
                    for c in t.children(i) {
                        assert_eq!(t.parent(c), Some(i));
                    }
                }
                for c in 1..t.len() {
                    assert!(t.children(t.parent(c).unwrap()).contains(&c));
                }
            }
        }
    }

    #[test]
    fn subtree_matches_descendant_walk() {
        let t = make_tree(3, 4).unwrap();
        for i in 0..t.len() {
            let mut walk = vec![i];
            let mut j = 0;
            while j < walk.len() {
                let n = walk[j];
                walk.extend(t.children(n));
                j += 1;
            }
            walk.sort_unstable();
            assert_eq!(t.subtree(i), walk);
            assert_eq!(t.subtree_size(i), walk.len());
        }
    }

    #[test]
    fn groups_small_tree_order() {
        let t = make_tree(2, 2).unwrap();
        let g = groups_of(&t, None).unwrap();
        let listed: Vec<Vec<usize>> = g.order().iter().map(|&n| g.members(n)).collect();
        assert_eq!(listed, vec![vec![1], vec![2], vec![0, 1, 2]]);
    }

    #[test]
    fn groups_root_and_default_weights() {
        let t = make_tree(2, 3).unwrap();
        let g = groups_of(&t, None).unwrap();
        assert_eq!(g.len(), 7);
        assert_eq!(g.members(0), (0..7).collect::<Vec<_>>());
        assert!(g.weights().iter().all(|&w| w == 1.0));
    }

    #[test]
    fn groups_are_laminar() {
        let t = make_tree(3, 3).unwrap();
        let g = groups_of(&t, None).unwrap();
        for a in 0..t.len() {
            for b in 0..t.len() {
                let ga = g.members(a);
                let gb = g.members(b);
                let inter: Vec<_> = ga.iter().filter(|x| gb.contains(x)).copied().collect();
                assert!(inter.is_empty() || inter == ga || inter == gb);
            }
        }
    }

    #[test]
    fn groups_reject_negative_weight_and_bad_order() {
        let t = make_tree(2, 2).unwrap();
        assert!(groups_of(&t, Some(&[1.0, -0.5, 1.0])).is_err());
        assert!(GroupSet::from_order(&t, vec![0, 1, 2], None).is_err());
        assert!(GroupSet::from_order(&t, vec![2, 1, 0], None).is_ok());
    }

    #[test]
    fn random_tree_sparse_extremes() {
        let t = make_tree(2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let one = random_tree_sparse(&t, 1, 1.0, 2.0, &mut rng).unwrap();
        assert_eq!(one.support(), &[0]);
        let all = random_tree_sparse(&t, 7, 1.0, 2.0, &mut rng).unwrap();
        assert_eq!(all.support(), &[0, 1, 2, 3, 4, 5, 6]);
        assert!(all.alpha_min() >= 1.0);
        assert!(random_tree_sparse(&t, 8, 1.0, 2.0, &mut rng).is_err());
        assert!(random_tree_sparse(&t, 2, 0.0, 2.0, &mut rng).is_err());
    }

    #[test]
    fn random_three_subtrees_contain_root_and_child() {
        // the rooted connected 3-subtrees of T_{7,2} are {0,1,2}, {0,1,3},
        // {0,1,4}, {0,2,5}, {0,2,6}
        let t = make_tree(2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let s = random_tree_sparse(&t, 3, 0.5, 1.0, &mut rng).unwrap();
            assert!(s.support().contains(&0));
            assert!(s.support().contains(&1) || s.support().contains(&2));
            assert!(is_tree_sparse(s.values(), &t, 0.0));
        }
    }

    #[test]
    fn tree_sparse_checks() {
        let t = make_tree(2, 3).unwrap();
        assert!(is_tree_sparse(&[0.0; 7], &t, 0.0));
        let mut v = [0.0; 7];
        v[2] = 1.0;
        assert!(!is_tree_sparse(&v, &t, 0.0));
        let mut v = [0.0; 7];
        v[0] = 1.0;
        v[1] = -2.0;
        v[4] = 0.3;
        assert!(is_tree_sparse(&v, &t, 0.0));
        assert!(!is_tree_sparse(&[0.0; 6], &t, 0.0));
    }

    #[test]
    fn project_examples() {
        let t = make_tree(2, 3).unwrap();
        let v = [5.0, 1.0, 3.0, 0.0, 0.0, 0.0, 0.0];
        let pr = tree_project(&v, &t, 2, ProjectionMode::Exact).unwrap();
        assert_eq!(pr.support(), &[0, 2]);
        assert_eq!(pr.energy(), 34.0);

        let full = tree_project(&v, &t, 7, ProjectionMode::Exact).unwrap();
        assert_eq!(full.values(), &v);
        assert_eq!(full.support(), &[0, 1, 2]);

        let one = tree_project(&v, &t, 1, ProjectionMode::Greedy).unwrap();
        assert_eq!(one.support(), &[0]);
        assert!(tree_project(&v, &t, 0, ProjectionMode::Exact).is_err());
    }

    #[test]
    fn exact_beats_greedy_on_deep_payload() {
        // a weak root-side path hides a large leaf from the greedy rule
        let t = make_tree(2, 3).unwrap();
        let v = [1.0, 0.1, 0.5, 10.0, 0.0, 0.4, 0.0];
        let exact = tree_project(&v, &t, 3, ProjectionMode::Exact).unwrap();
        let greedy = tree_project(&v, &t, 3, ProjectionMode::Greedy).unwrap();
        assert_eq!(exact.support(), &[0, 1, 3]);
        assert_eq!(greedy.support(), &[0, 2, 5]);
        assert!(exact.energy() > greedy.energy());
    }
}
