// mdbook cannot run listings that depend on an outside crate, so every
// chapter of the guide is pulled in here as the docs of an empty module
// and `cargo test --doc` runs the listings. One module per chapter keeps
// failures traceable to a file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/measures.md")]
pub mod measures {}
#[doc = include_str!("../../../book/src/intensity-flow.md")]
pub mod intensity_flow {}
#[doc = include_str!("../../../book/src/long-time.md")]
pub mod long_time {}
#[doc = include_str!("../../../book/src/population.md")]
pub mod population {}
#[doc = include_str!("../../../book/src/particles.md")]
pub mod particles {}
#[doc = include_str!("../../../book/src/fluctuations.md")]
pub mod fluctuations {}
#[doc = include_str!("../../../book/src/births.md")]
pub mod births {}
#[doc = include_str!("../../../book/src/verification.md")]
pub mod verification {}
