//! Bounded formulas over the reals with registered function symbols:
//! syntax tree, s-expression parser and printer, and normal forms.

mod ast;
mod normalize;
mod parse;
mod print;
pub(crate) mod sexpr;

pub use ast::{Atom, Formula, FuncId, Quant, Rel, Term};
pub use normalize::{
    assemble, canonical_cnf, cnf, cnf_to_formula, free_vars, function_terms, normalize, purity,
    split_prenex, Binder, Cnf, FreshNames, Purity,
};
pub use parse::{parse_formula, parse_term, ParseError, ParseErrorKind};
pub(crate) use parse::term_from_sexp;
pub use print::{pretty_formula, print_formula, print_term};
