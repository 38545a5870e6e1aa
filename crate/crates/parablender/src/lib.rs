pub mod error;
pub mod folding;
pub mod grassmann;
pub mod ifs;
pub mod jets;
pub mod numerics;
pub mod scenarios;
pub mod skew;

pub use error::{Error, Result};

/// The guide in `book/`; its code blocks run as doc tests.
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/covering.md")]
    pub mod covering {}
    #[doc = include_str!("../../../book/src/blenders.md")]
    pub mod blenders {}
    #[doc = include_str!("../../../book/src/grassmann.md")]
    pub mod grassmann {}
    #[doc = include_str!("../../../book/src/folding.md")]
    pub mod folding {}
    #[doc = include_str!("../../../book/src/jets.md")]
    pub mod jets {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    pub mod scenarios {}
}
