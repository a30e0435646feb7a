//! Visual sentiment evaluation pipeline.
//!
//! Crowd votes become consensus labels ([`labeling`]), images are classified
//! or captioned through chat-completions endpoints ([`gateway`]), captions
//! are scored by a lexicon baseline ([`lexicon`]) or external text
//! classifiers ([`tuner`]), and every variant is evaluated with stratified
//! cross-validation ([`evalkit`]). The [`cli`] module wires these into the
//! `visent` binary.

pub mod corpus;
pub mod evalkit;
pub mod gateway;
pub mod labeling;
pub mod lexicon;
pub mod tuner;
pub mod cli;
