use std::collections::BTreeSet;
use std::sync::Arc;

use ispace_core::dsl;
use ispace_core::host::{HostValue, ObjectId, TableHost};
use ispace_core::oracle;
use ispace_gpu::encoding::{self, GpuSpace, GPU_SPACE};
use ispace_gpu::kernel::*;
use ispace_gpu::realize::{order_subspace, realizable_orders, Relation, ORDER_VALUES};
use ispace_gpu::MachineParams;

fn space(spec: &KernelSpec) -> GpuSpace {
    GpuSpace::from_spec(spec, MachineParams::default()).unwrap()
}

fn toy_matmul() -> KernelSpec {
    KernelSpec::matmul(4, 4, 4, vec![Factors::List(vec![2])])
}

#[test]
fn shipped_definition_is_valid() {
    let def = dsl::parse(GPU_SPACE).unwrap();
    assert_eq!(dsl::validate(&def), []);
    assert_eq!(dsl::parse(&dsl::pretty_print(&def)).unwrap(), def);
}

fn order_oracle(dims: &[ObjectId], insts: &[ObjectId], mergeable: bool) -> BTreeSet<Relation> {
    let mut host = TableHost::new("order");
    for &d in dims {
        host.object(d.0, format!("d{}", d.0));
    }
    for &i in insts {
        host.object(i.0, format!("i{}", i.0));
    }
    let all: Vec<ObjectId> = dims.iter().chain(insts).copied().collect();
    host.add_to_set("Statements", &[], &all);
    host.add_to_set("Dimensions", &[], dims);
    host.add_to_set("Insts", &[], insts);
    host.method("mergeable", move |_| Some(HostValue::Bool(mergeable)));
    let def = order_subspace(&encoding::definition());
    let all = oracle::enumerate(Arc::new(def), Arc::new(host), 1_000_000).unwrap();
    all.into_iter()
        .map(|a| {
            a.values
                .iter()
                .map(|(k, v)| ((k.args[0], k.args[1]), ORDER_VALUES.iter().position(|x| x == v).unwrap()))
                .collect()
        })
        .collect()
}

#[test]
fn order_encoding_matches_loop_nest_trees() {
    for n in 1..=4u32 {
        for n_dims in 0..=n {
            // Interleave ids so that dimensions are not always the lowest.
            let ids: Vec<ObjectId> = (0..n).map(ObjectId).collect();
            let dims: Vec<ObjectId> = ids.iter().copied().filter(|x| x.0 % 2 == 0).take(n_dims as usize).collect();
            let rest: Vec<ObjectId> = ids.iter().copied().filter(|x| !dims.contains(x)).collect();
            let (dims, insts) = if dims.len() == n_dims as usize {
                (dims, rest)
            } else {
                let extra = n_dims as usize - dims.len();
                let mut d = dims.clone();
                d.extend(rest.iter().take(extra));
                d.sort();
                (d, rest[extra..].to_vec())
            };
            for mergeable in [false, true] {
                let trees = realizable_orders(&dims, &insts, &|_, _| mergeable);
                let encoded = order_oracle(&dims, &insts, mergeable);
                assert_eq!(encoded, trees, "dims {dims:?} insts {insts:?} mergeable {mergeable}");
            }
        }
    }
}

#[test]
fn toy_spaces_match_oracle() {
    let mut p2p = KernelSpec::new(KernelKind::PointToPoint);
    p2p.m = 4;
    p2p.n = 4;
    let mut outer = KernelSpec::new(KernelKind::OuterProduct);
    outer.m = 4;
    outer.n = 4;
    for spec in [p2p, outer] {
        let s = space(&spec);
        let by_prop = oracle::enumerate_by_propagation(&s.root, 100_000).unwrap();
        let by_oracle =
            oracle::enumerate(s.family.root_space().def.clone(), s.family.root_space().host.clone(), 100_000).unwrap();
        assert!(!by_prop.is_empty());
        assert_eq!(by_prop, by_oracle, "{:?}", spec.kernel);
    }
}

#[test]
fn toy_matmul_structure() {
    let s = space(&toy_matmul());
    let b = s.backbone();
    let names: Vec<&str> = b.dims.iter().map(|d| d.name.as_str()).collect();
    assert_eq!(names, ["m0", "n0", "k", "m1", "n1"]);
    let c = &s.root;
    let k = encoding::object(c, "k").unwrap();
    let init = encoding::object(c, "init").unwrap();
    let mad = encoding::object(c, "mad").unwrap();
    // The accumulator is initialized before the reduction loop.
    assert_eq!(c.values(c.lookup("order", &[init, k]).unwrap()), ["BEFORE"]);
    assert_eq!(c.values(c.lookup("order", &[k, mad]).unwrap()), ["OUTER"]);
    // Dynamic dimensions are neither unrolled, vectorized nor threads.
    assert_eq!(c.values(c.lookup("dim_kind", &[k]).unwrap()), ["LOOP"]);
    let ra = encoding::object(c, "A").unwrap();
    assert_eq!(c.values(c.lookup("mem_space", &[ra]).unwrap()), ["GLOBAL"]);
    assert_eq!(c.counter_bounds("num_threads", &[]), Some((1, 4)));
}

#[test]
fn mapped_operand_lowers_to_temporary() {
    let mut spec = KernelSpec::new(KernelKind::PointToPoint);
    spec.m = 4;
    spec.n = 8;
    let s = space(&spec);
    let c = &s.root;
    let i_a = encoding::object(c, "i_a").unwrap();
    let i_b = encoding::object(c, "i_b").unwrap();
    let j_a = encoding::object(c, "j_a").unwrap();
    let j_b = encoding::object(c, "j_b").unwrap();
    // Fuse the outer loops, keep the inner ones apart: a temporary of n
    // elements carries the values.
    let r = c.lookup("order", &[i_a, i_b]).unwrap();
    let c = c.apply_decision(r, c.mask_of(r, &["MERGED"]).unwrap()).unwrap();
    assert!(c.fired().is_empty());
    let r = c.lookup("order", &[j_a, j_b]).unwrap();
    let c = c.apply_decision(r, c.mask_of(r, &["BEFORE"]).unwrap()).unwrap();
    assert_eq!(c.fired().len(), 1);
    let b = encoding::backbone_of(&c).backbone.clone();
    assert_eq!(b.insts.len(), 5);
    let tmp = encoding::object(&c, "tmp0").unwrap();
    let ms = c.lookup("mem_space", &[tmp]).unwrap();
    assert_eq!(c.values(ms).len(), 2);
    let c = c.apply_decision(ms, c.mask_of(ms, &["SHARED"]).unwrap()).unwrap();
    assert_eq!(c.counter_bounds("shared_mem_bytes", &[]), Some((32, 32)));
    // The store stays in the producer nest, the load in the consumer nest.
    let st = encoding::object(&c, "st_tmp0").unwrap();
    let ld = encoding::object(&c, "ld_tmp0").unwrap();
    assert_eq!(c.values(c.lookup("order", &[j_a, st]).unwrap()), ["OUTER"]);
    assert_eq!(c.values(c.lookup("order", &[j_b, ld]).unwrap()), ["OUTER"]);
    assert_eq!(c.values(c.lookup("order", &[st, ld]).unwrap()), ["BEFORE"]);
}

#[test]
fn fixed_decisions_restrict_the_root() {
    let mut spec = toy_matmul();
    spec.fixed = vec![
        FixedDecision { choice: "cache".into(), args: vec!["*".into()], values: vec!["NONE".into()] },
        FixedDecision { choice: "dim_kind".into(), args: vec!["m1".into()], values: vec!["THREAD".into()] },
    ];
    let s = space(&spec);
    let c = &s.root;
    for name in ["ld_a", "ld_b", "st_c"] {
        let i = encoding::object(c, name).unwrap();
        assert_eq!(c.values(c.lookup("cache", &[i]).unwrap()), ["NONE"]);
    }
    let m1 = encoding::object(c, "m1").unwrap();
    assert_eq!(c.values(c.lookup("dim_kind", &[m1]).unwrap()), ["THREAD"]);
    spec.fixed = vec![FixedDecision { choice: "cache".into(), args: vec!["nope".into()], values: vec!["NONE".into()] }];
    assert!(GpuSpace::from_spec(&spec, MachineParams::default()).is_err());
    spec.fixed =
        vec![FixedDecision { choice: "cache".into(), args: vec!["*".into()], values: vec!["SOMETIMES".into()] }];
    assert!(GpuSpace::from_spec(&spec, MachineParams::default()).is_err());
}

#[test]
fn shipped_kernels_instantiate() {
    let axpy = KernelSpec::axpy(1 << 26, vec![Factors::Range { range: [2, 4] }, Factors::Range { range: [2, 1024] }]);
    let s = space(&axpy);
    assert_eq!(s.backbone().dims.len(), 12);
    assert_eq!(s.backbone().mappings.len(), 3);
    let mut mm =
        KernelSpec::matmul(256, 256, 256, vec![Factors::Range { range: [2, 32] }, Factors::Range { range: [2, 4] }]);
    let s = space(&mm);
    assert_eq!(s.backbone().dims.len(), 7);
    mm.kernel = KernelKind::StridedMatmul;
    let s = space(&mm);
    assert_eq!(s.backbone().regions[0].len, 256 * 256 * 32);
}
