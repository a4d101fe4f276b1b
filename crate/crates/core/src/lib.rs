pub mod error;
pub mod expr;
pub mod fourier;
pub mod frame;
pub mod group;
pub mod holo;
pub mod linalg;
pub mod quadrature;
pub mod sample;
pub mod spectral;
pub mod symbol;
pub mod tube;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/fourier.md")]
    mod fourier {}
    #[doc = include_str!("../../../book/src/symbols.md")]
    mod symbols {}
    #[doc = include_str!("../../../book/src/holomorphic.md")]
    mod holomorphic {}
    #[doc = include_str!("../../../book/src/spectral.md")]
    mod spectral {}
    #[doc = include_str!("../../../book/src/tube.md")]
    mod tube {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
