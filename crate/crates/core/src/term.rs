//! Integer expressions over choice values, used for counter terms.

use serde::{Deserialize, Serialize};

/// An integer-valued expression. `K` names a choice instance: a
/// [`crate::host::ChoiceKey`] before resolution, a variable index after.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Term<K> {
    Const(i64),
    /// The value of an integer choice.
    Value(K),
    Mul(Vec<Term<K>>),
    /// `numerator / product(factors)`; used for dynamic extents and assumed exact.
    Div(i64, Vec<Term<K>>),
    /// `then` if the enum choice takes one of `values`, `otherwise` if not.
    Select {
        key: K,
        values: Vec<String>,
        then: Box<Term<K>>,
        otherwise: Box<Term<K>>,
    },
}

impl<K> Term<K> {
    pub fn map<L, E>(&self, f: &mut impl FnMut(&K) -> Result<L, E>) -> Result<Term<L>, E> {
        Ok(match self {
            Term::Const(c) => Term::Const(*c),
            Term::Value(k) => Term::Value(f(k)?),
            Term::Mul(ts) => Term::Mul(ts.iter().map(|t| t.map(f)).collect::<Result<_, _>>()?),
            Term::Div(n, ts) => Term::Div(*n, ts.iter().map(|t| t.map(f)).collect::<Result<_, _>>()?),
            Term::Select { key, values, then, otherwise } => Term::Select {
                key: f(key)?,
                values: values.clone(),
                then: Box::new(then.map(f)?),
                otherwise: Box::new(otherwise.map(f)?),
            },
        })
    }

    /// Choice instances the expression depends on.
    pub fn deps(&self) -> Vec<&K> {
        let mut out = Vec::new();
        self.collect_deps(&mut out);
        out
    }

    fn collect_deps<'a>(&'a self, out: &mut Vec<&'a K>) {
        match self {
            Term::Const(_) => {}
            Term::Value(k) => out.push(k),
            Term::Mul(ts) | Term::Div(_, ts) => ts.iter().for_each(|t| t.collect_deps(out)),
            Term::Select { key, then, otherwise, .. } => {
                out.push(key);
                then.collect_deps(out);
                otherwise.collect_deps(out);
            }
        }
    }
}

/// Evaluation context for resolved terms.
pub trait TermEnv {
    /// Smallest and largest remaining value of an integer variable.
    fn int_range(&self, var: u32) -> (i64, i64);
    /// `Some(true)` if the enum variable surely takes one of `values`,
    /// `Some(false)` if surely not, `None` when still open.
    fn select(&self, var: u32, values: &[String]) -> Option<bool>;
}

impl Term<u32> {
    /// Interval of the expression over all remaining assignments. All terms
    /// are assumed non-negative.
    pub fn range(&self, env: &impl TermEnv) -> (i64, i64) {
        match self {
            Term::Const(c) => (*c, *c),
            Term::Value(v) => env.int_range(*v),
            Term::Mul(ts) => ts.iter().fold((1, 1), |(lo, hi), t| {
                let (a, b) = t.range(env);
                (lo.saturating_mul(a), hi.saturating_mul(b))
            }),
            Term::Div(n, ts) => {
                let (lo, hi) = Term::Mul(ts.clone()).range(env);
                (n / hi.max(1), n / lo.max(1))
            }
            Term::Select { key, values, then, otherwise } => match env.select(*key, values) {
                Some(true) => then.range(env),
                Some(false) => otherwise.range(env),
                None => {
                    let (a, b) = then.range(env);
                    let (c, d) = otherwise.range(env);
                    (a.min(c), b.max(d))
                }
            },
        }
    }
}
