//! Independent check of the order encoding: the pairwise relations of every
//! loop-nest tree over a set of statements.

use std::collections::{BTreeMap, BTreeSet};

use ispace_core::host::ObjectId;
use ispace_core::ir::{Item, SpaceDefinition};

/// Values of the `order` choice, in declaration order.
pub const ORDER_VALUES: [&str; 5] = ["BEFORE", "AFTER", "INNER", "OUTER", "MERGED"];

/// `order(a, b)` for every `a < b`, as indices into [`ORDER_VALUES`].
pub type Relation = BTreeMap<(ObjectId, ObjectId), usize>;

/// Relations of all trees where dimensions may have children, instructions
/// are leaves, children are totally ordered and dimensions for which
/// `mergeable` holds pairwise may share a node.
pub fn realizable_orders(
    dims: &[ObjectId],
    insts: &[ObjectId],
    mergeable: &dyn Fn(ObjectId, ObjectId) -> bool,
) -> BTreeSet<Relation> {
    let mut out = BTreeSet::new();
    for classes in partitions(dims) {
        if classes.iter().any(|c| c.iter().any(|&a| c.iter().any(|&b| a != b && !mergeable(a, b)))) {
            continue;
        }
        // Nodes: dimension classes first, then instructions.
        let n_classes = classes.len();
        let n = n_classes + insts.len();
        let mut parent = vec![None; n];
        enumerate_parents(0, n_classes, &mut parent, &mut |parent| {
            let mut kids: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
            for (x, p) in parent.iter().enumerate() {
                kids.entry(*p).or_default().push(x);
            }
            let lists: Vec<Vec<usize>> = kids.values().cloned().collect();
            for_each_ordering(&lists, 0, &mut vec![0; n], &mut |rank| {
                out.insert(relation(&classes, insts, parent, rank));
            });
        });
    }
    out
}

fn partitions(items: &[ObjectId]) -> Vec<Vec<Vec<ObjectId>>> {
    let Some((&first, rest)) = items.split_first() else { return vec![vec![]] };
    let mut out = Vec::new();
    for p in partitions(rest) {
        for k in 0..p.len() {
            let mut q = p.clone();
            q[k].insert(0, first);
            out.push(q);
        }
        let mut q = p;
        q.insert(0, vec![first]);
        out.push(q);
    }
    out
}

fn enumerate_parents(x: usize, n_classes: usize, parent: &mut Vec<Option<usize>>, f: &mut dyn FnMut(&[Option<usize>])) {
    if x == parent.len() {
        let acyclic = (0..parent.len()).all(|start| {
            let mut cur = parent[start];
            for _ in 0..parent.len() {
                match cur {
                    None => return true,
                    Some(c) => cur = parent[c],
                }
            }
            false
        });
        if acyclic {
            f(parent);
        }
        return;
    }
    for p in std::iter::once(None).chain((0..n_classes).map(Some)) {
        if p != Some(x) {
            parent[x] = p;
            enumerate_parents(x + 1, n_classes, parent, f);
        }
    }
    parent[x] = None;
}

fn for_each_ordering(lists: &[Vec<usize>], k: usize, rank: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if k == lists.len() {
        f(rank);
        return;
    }
    let mut perm = lists[k].clone();
    permutations(&mut perm, 0, &mut |p| {
        for (r, &x) in p.iter().enumerate() {
            rank[x] = r;
        }
        for_each_ordering(lists, k + 1, rank, f);
    });
}

fn permutations(v: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permutations(v, k + 1, f);
        v.swap(k, i);
    }
}

fn relation(classes: &[Vec<ObjectId>], insts: &[ObjectId], parent: &[Option<usize>], rank: &[usize]) -> Relation {
    let mut node_of = BTreeMap::new();
    for (k, c) in classes.iter().enumerate() {
        for &d in c {
            node_of.insert(d, k);
        }
    }
    for (k, &i) in insts.iter().enumerate() {
        node_of.insert(i, classes.len() + k);
    }
    let path = |mut x: usize| {
        let mut p = vec![x];
        while let Some(q) = parent[x] {
            p.push(q);
            x = q;
        }
        p.reverse();
        p
    };
    let mut rel = Relation::new();
    let ids: Vec<ObjectId> = node_of.keys().copied().collect();
    for (k, &a) in ids.iter().enumerate() {
        for &b in &ids[k + 1..] {
            let (x, y) = (node_of[&a], node_of[&b]);
            let v = if x == y {
                4
            } else {
                let (px, py) = (path(x), path(y));
                let common = px.iter().zip(&py).take_while(|(u, v)| u == v).count();
                if common == px.len() {
                    3 // a encloses b
                } else if common == py.len() {
                    2
                } else if rank[px[common]] < rank[py[common]] {
                    0
                } else {
                    1
                }
            };
            rel.insert((a, b), v);
        }
    }
    rel
}

/// The part of a definition that only constrains `order`: its sets, the
/// `order` choice and every constraint that mentions no other choice.
pub fn order_subspace(def: &SpaceDefinition) -> SpaceDefinition {
    let keep_sets = ["Statements", "Insts", "Dimensions"];
    let items = def
        .items
        .iter()
        .filter(|item| match item {
            Item::Set(s) => keep_sets.contains(&s.name.as_str()),
            Item::Choice(c) => c.name == "order",
            Item::Require(r) => {
                r.foralls.iter().all(|p| keep_sets.contains(&p.set.name.as_str()))
                    && r.body.iter().flat_map(|a| a.calls()).all(|c| c.name == "order")
            }
            _ => false,
        })
        .cloned()
        .collect();
    SpaceDefinition { items }
}
