//! Small directed-graph utilities over state sets given as adjacency lists.

use crate::model::{ArmPolicy, DtModel};
use crate::scalar::{positive, Scalar};

pub type Adjacency = Vec<Vec<usize>>;

/// Edges `s -> s'` with `sum_a pi(a|s) P(s,a,s') > 0`.
pub fn policy_graph<T: Scalar>(model: &DtModel<T>, policy: &ArmPolicy<T>) -> Adjacency {
    let n = model.n_states();
    (0..n)
        .map(|s| {
            (0..n)
                .filter(|&x| {
                    let p = policy.prob(s, 0) * model.p(s, 0, x) + policy.prob(s, 1) * model.p(s, 1, x);
                    positive(p)
                })
                .collect()
        })
        .collect()
}

/// Edges present under action `a`.
pub fn action_graph<T: Scalar>(model: &DtModel<T>, a: usize) -> Adjacency {
    let n = model.n_states();
    (0..n)
        .map(|s| (0..n).filter(|&x| positive(model.p(s, a, x))).collect())
        .collect()
}

/// Edges present under both actions.
pub fn any_policy_graph<T: Scalar>(model: &DtModel<T>) -> Adjacency {
    let n = model.n_states();
    (0..n)
        .map(|s| {
            (0..n)
                .filter(|&x| positive(model.p(s, 0, x)) && positive(model.p(s, 1, x)))
                .collect()
        })
        .collect()
}

/// Strongly connected components (Tarjan, iterative). Components come out
/// in reverse topological order.
pub fn scc(adj: &Adjacency) -> Vec<Vec<usize>> {
    let n = adj.len();
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut counter = 0;
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        let mut work = vec![(root, 0usize)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut next)) = work.last_mut() {
            if *next < adj[v].len() {
                let w = adj[v][*next];
                *next += 1;
                if index[w] == UNSEEN {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                work.pop();
                if let Some(&(parent, _)) = work.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
    }
    comps
}

/// Closed communicating classes: SCCs with no edge leaving them.
pub fn closed_classes(adj: &Adjacency) -> Vec<Vec<usize>> {
    let comps = scc(adj);
    let mut comp_of = vec![0; adj.len()];
    for (c, comp) in comps.iter().enumerate() {
        for &v in comp {
            comp_of[v] = c;
        }
    }
    let mut classes: Vec<Vec<usize>> = comps
        .iter()
        .enumerate()
        .filter(|(c, comp)| comp.iter().all(|&v| adj[v].iter().all(|&w| comp_of[w] == *c)))
        .map(|(_, comp)| comp.clone())
        .collect();
    classes.sort();
    classes
}

/// The unique closed class, if there is exactly one.
pub fn recurrent_class(adj: &Adjacency) -> Option<Vec<usize>> {
    let mut classes = closed_classes(adj);
    if classes.len() == 1 {
        classes.pop()
    } else {
        None
    }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn coprime(a: usize, b: usize) -> bool {
    gcd(a, b) == 1
}

/// Period of a strongly connected vertex set (gcd of level differences
/// along internal edges of a BFS tree).
pub fn period(adj: &Adjacency, class: &[usize]) -> usize {
    let mut inside = vec![false; adj.len()];
    for &v in class {
        inside[v] = true;
    }
    let Some(&root) = class.first() else { return 0 };
    let mut level = vec![usize::MAX; adj.len()];
    level[root] = 0;
    let mut queue = std::collections::VecDeque::from([root]);
    let mut g = 0;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !inside[w] {
                continue;
            }
            if level[w] == usize::MAX {
                level[w] = level[v] + 1;
                queue.push_back(w);
            } else {
                g = gcd(g, (level[v] + 1).abs_diff(level[w]));
            }
        }
    }
    g
}

/// Result of a bounded simple-cycle enumeration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleSearch {
    pub cycles: Vec<Vec<usize>>,
    /// True when the cap was hit before the search finished.
    pub truncated: bool,
}

/// Simple cycles through vertices flagged in `allowed`, self-loops
/// included. Each cycle is listed once, rooted at its smallest vertex.
pub fn simple_cycles(adj: &Adjacency, allowed: &[bool], cap: usize) -> CycleSearch {
    let n = adj.len();
    let mut cycles = Vec::new();
    let mut on_path = vec![false; n];
    for start in 0..n {
        if !allowed[start] {
            continue;
        }
        let mut path = vec![start];
        on_path[start] = true;
        let mut work = vec![0usize];
        while let Some(next) = work.last_mut() {
            let v = *path.last().expect("path tracks work");
            if *next < adj[v].len() {
                let w = adj[v][*next];
                *next += 1;
                if w == start {
                    cycles.push(path.clone());
                    if cycles.len() >= cap {
                        return CycleSearch {
                            cycles,
                            truncated: true,
                        };
                    }
                } else if w > start && allowed[w] && !on_path[w] {
                    on_path[w] = true;
                    path.push(w);
                    work.push(0);
                }
            } else {
                work.pop();
                let v = path.pop().expect("path tracks work");
                on_path[v] = false;
            }
        }
    }
    CycleSearch {
        cycles,
        truncated: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scc_and_closed_classes() {
        // 0 <-> 1 -> 2 <-> 3, 4 isolated self-loop
        let adj = vec![vec![1], vec![0, 2], vec![3], vec![2], vec![4]];
        let mut comps = scc(&adj);
        comps.sort();
        assert_eq!(comps, vec![vec![0, 1], vec![2, 3], vec![4]]);
        assert_eq!(closed_classes(&adj), vec![vec![2, 3], vec![4]]);
        assert_eq!(recurrent_class(&adj), None);
        assert_eq!(recurrent_class(&adj[..4].to_vec()), Some(vec![2, 3]));
    }

    #[test]
    fn periods() {
        let ring = vec![vec![1], vec![2], vec![3], vec![0]];
        assert_eq!(period(&ring, &[0, 1, 2, 3]), 4);
        let lazy = vec![vec![0, 1], vec![2], vec![3], vec![0]];
        assert_eq!(period(&lazy, &[0, 1, 2, 3]), 1);
        let two_and_three = vec![vec![1], vec![0, 2], vec![0]];
        assert_eq!(period(&two_and_three, &[0, 1, 2]), 1);
    }

    #[test]
    fn cycles_of_complete_graph() {
        let adj: Adjacency = (0..3).map(|_| vec![0, 1, 2]).collect();
        let found = simple_cycles(&adj, &[true; 3], 1000);
        // 3 self-loops, 3 two-cycles, 2 three-cycles
        assert_eq!(found.cycles.len(), 8);
        assert!(!found.truncated);
        let capped = simple_cycles(&adj, &[true; 3], 4);
        assert!(capped.truncated);
        let restricted = simple_cycles(&adj, &[true, false, true], 1000);
        assert_eq!(restricted.cycles.len(), 3);
    }

    #[test]
    fn coprimality() {
        assert!(coprime(1, 4));
        assert!(coprime(2, 3));
        assert!(!coprime(2, 4));
    }
}
