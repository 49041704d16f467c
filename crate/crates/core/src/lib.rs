pub mod cli;
pub mod correspondence;
pub mod error;
pub mod expectation;
pub mod fock;
pub mod hilbert;
pub mod lift;
pub mod linalg;
pub mod star;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/algebra.md")]
    mod algebra {}
    #[doc = include_str!("../../../book/src/correspondence.md")]
    mod correspondence {}
    #[doc = include_str!("../../../book/src/fock.md")]
    mod fock {}
    #[doc = include_str!("../../../book/src/expectation.md")]
    mod expectation {}
    #[doc = include_str!("../../../book/src/lift.md")]
    mod lift {}
    #[doc = include_str!("../../../book/src/certificates.md")]
    mod certificates {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
