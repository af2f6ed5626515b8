pub mod calculus;
pub mod catalog;
pub mod cli;
pub mod construct;
pub mod error;
pub mod expr;
pub mod jet;
pub mod morphism;
pub mod parse;

pub use error::{Error, Result};
pub use expr::Expr;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/expressions.md")]
    pub struct Expressions;
    #[doc = include_str!("../../../book/src/tension.md")]
    pub struct Tension;
    #[doc = include_str!("../../../book/src/jets.md")]
    pub struct Jets;
    #[doc = include_str!("../../../book/src/conditions.md")]
    pub struct Conditions;
    #[doc = include_str!("../../../book/src/constructions.md")]
    pub struct Constructions;
    #[doc = include_str!("../../../book/src/catalog.md")]
    pub struct CatalogChapter;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
