//! Differentially-defined function symbols: each is the first coordinate of
//! the solution of a polynomial initial value problem with rational data.

use crate::formula::sexpr::{read_all, Sexp};
use crate::formula::{print_term, term_from_sexp, FuncId};
use crate::poly::{poly_to_term, term_to_poly, Poly};
use crate::rational::{fmt_q, parse_q, Q};
use num_traits::{One, Zero};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FuncDef {
    pub name: String,
    /// Number of state coordinates.
    pub dim: usize,
    /// Vector field over `x0 … x{dim-1}`.
    pub field: Vec<Poly>,
    pub init_time: Q,
    pub init_state: Vec<Q>,
    /// Projected coordinate; always 0.
    pub projection: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("function `{0}` is already registered")]
    Duplicate(String),
    #[error("function `{0}`: vector field must depend only on x0..x{1}")]
    NonAutonomous(String, usize),
    #[error("function `{0}`: {1}")]
    Malformed(String, String),
    #[error("definition file: {0}")]
    Syntax(String),
}

impl FuncDef {
    pub fn new(name: &str, field: Vec<Poly>, init_time: Q, init_state: Vec<Q>) -> Self {
        FuncDef {
            name: name.to_string(),
            dim: field.len(),
            field,
            init_time,
            init_state,
            projection: 0,
        }
    }

    pub fn state_names(&self) -> Vec<String> {
        (0..self.dim).map(|i| format!("x{i}")).collect()
    }

    /// Renders the definition in the `define-fn` file syntax.
    pub fn to_source(&self) -> String {
        let names = self.state_names();
        let field: Vec<String> =
            self.field.iter().map(|p| format!("({})", print_term(&poly_to_term(p, &names)))).collect();
        let init: Vec<String> = self.init_state.iter().map(fmt_q).collect();
        format!(
            "(define-fn {} (dim {}) (field {}) (init {} ({})) (project {}))",
            self.name,
            self.dim,
            field.join(" "),
            fmt_q(&self.init_time),
            init.join(" "),
            self.projection
        )
    }

    fn check(&self) -> Result<(), RegistryError> {
        let bad = |m: &str| RegistryError::Malformed(self.name.clone(), m.to_string());
        if self.dim == 0 {
            return Err(bad("dimension must be positive"));
        }
        if self.field.len() != self.dim || self.init_state.len() != self.dim {
            return Err(bad("field and initial state must have `dim` entries"));
        }
        if self.field.iter().any(|p| p.nvars() != self.dim) {
            return Err(RegistryError::NonAutonomous(self.name.clone(), self.dim - 1));
        }
        if self.projection != 0 {
            return Err(bad("only projection 0 is supported"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct FuncRegistry {
    defs: Vec<FuncDef>,
    by_name: BTreeMap<String, u32>,
}

impl FuncRegistry {
    pub fn empty() -> Self {
        FuncRegistry::default()
    }

    pub fn register(&mut self, def: FuncDef) -> Result<FuncId, RegistryError> {
        def.check()?;
        if self.by_name.contains_key(&def.name) {
            return Err(RegistryError::Duplicate(def.name));
        }
        let idx = self.defs.len() as u32;
        self.by_name.insert(def.name.clone(), idx);
        let id = FuncId::new(&def.name, idx);
        self.defs.push(def);
        Ok(id)
    }

    pub fn lookup(&self, name: &str) -> Option<FuncId> {
        self.by_name.get(name).map(|&i| FuncId::new(name, i))
    }

    pub fn get(&self, id: &FuncId) -> &FuncDef {
        self.get_by_name(id.name()).expect("handle from this registry")
    }

    pub fn get_by_name(&self, name: &str) -> Option<&FuncDef> {
        self.by_name.get(name).map(|&i| &self.defs[i as usize])
    }

    pub fn defs(&self) -> &[FuncDef] {
        &self.defs
    }

    /// Registers every `define-fn` form of a definition file.
    pub fn load_source(&mut self, text: &str) -> Result<Vec<FuncId>, RegistryError> {
        let forms = read_all(text).map_err(|e| RegistryError::Syntax(format!("{}: {}", e.pos, e.msg)))?;
        forms.iter().map(|f| parse_define(f).and_then(|d| self.register(d))).collect()
    }
}

fn parse_define(e: &Sexp) -> Result<FuncDef, RegistryError> {
    let syn = |m: String| RegistryError::Syntax(format!("{}: {m}", e.pos()));
    let xs = e.as_list().ok_or_else(|| syn("expected (define-fn …)".into()))?;
    if xs.first().and_then(|h| h.as_atom()) != Some("define-fn") || xs.len() < 2 {
        return Err(syn("expected (define-fn name …)".into()));
    }
    let name = xs[1].as_atom().ok_or_else(|| syn("function name must be a symbol".into()))?.to_string();
    let mal = |m: &str| RegistryError::Malformed(name.clone(), m.to_string());
    let mut dim = None;
    let mut field_src = None;
    let mut init = None;
    let mut projection = 0usize;
    for clause in &xs[2..] {
        let c = clause.as_list().ok_or_else(|| mal("expected a (key …) clause"))?;
        match c.first().and_then(|h| h.as_atom()) {
            Some("dim") => {
                let d = c.get(1).and_then(|d| d.as_atom()).and_then(|d| d.parse::<usize>().ok());
                dim = Some(d.ok_or_else(|| mal("(dim n) needs a positive integer"))?);
            }
            Some("field") => field_src = Some(&c[1..]),
            Some("init") => {
                if c.len() != 3 {
                    return Err(mal("(init T (X0 …)) expected"));
                }
                let t = c[1].as_atom().and_then(|s| parse_q(s).ok()).ok_or_else(|| mal("initial time must be rational"))?;
                let xs0 = c[2].as_list().ok_or_else(|| mal("initial state must be a list"))?;
                let state = xs0
                    .iter()
                    .map(|x| x.as_atom().and_then(|s| parse_q(s).ok()))
                    .collect::<Option<Vec<Q>>>()
                    .ok_or_else(|| mal("initial state entries must be rational"))?;
                init = Some((t, state));
            }
            Some("project") => {
                projection = c
                    .get(1)
                    .and_then(|d| d.as_atom())
                    .and_then(|d| d.parse().ok())
                    .ok_or_else(|| mal("(project k) needs an integer"))?;
            }
            _ => return Err(mal("unknown clause")),
        }
    }
    let dim = dim.ok_or_else(|| mal("missing (dim n)"))?;
    let field_src = field_src.ok_or_else(|| mal("missing (field …)"))?;
    let (init_time, init_state) = init.ok_or_else(|| mal("missing (init …)"))?;
    let mut field = Vec::new();
    for comp in field_src {
        // Each component may be wrapped in an extra pair of parentheses.
        let inner = match comp.as_list() {
            Some([one]) => one,
            _ => comp,
        };
        let t = term_from_sexp(inner, &|_| None).map_err(|e| mal(&e.to_string()))?;
        let idx = |v: &str| v.strip_prefix('x').and_then(|k| k.parse::<usize>().ok()).filter(|&k| k < dim);
        let p = term_to_poly(&t, dim, &idx).ok_or_else(|| RegistryError::NonAutonomous(name.clone(), dim - 1))?;
        field.push(p);
    }
    let def = FuncDef { name, dim, field, init_time, init_state, projection };
    def.check()?;
    Ok(def)
}

/// Registry holding `sin`, `cos` and `exp`.
pub fn builtin_registry() -> FuncRegistry {
    let mut r = FuncRegistry::empty();
    let x0 = Poly::var(2, 0);
    let x1 = Poly::var(2, 1);
    let rot = vec![x1.clone(), x0.neg()];
    r.register(FuncDef::new("sin", rot.clone(), Q::zero(), vec![Q::zero(), Q::one()]))
        .expect("fresh registry");
    r.register(FuncDef::new("cos", rot, Q::zero(), vec![Q::one(), Q::zero()]))
        .expect("fresh registry");
    r.register(FuncDef::new("exp", vec![Poly::var(1, 0)], Q::zero(), vec![Q::one()]))
        .expect("fresh registry");
    r
}

/// `x' = 0, x(0) = c`.
pub fn constant_def(name: &str, c: Q) -> FuncDef {
    FuncDef::new(name, vec![Poly::zero(1)], Q::zero(), vec![c])
}
