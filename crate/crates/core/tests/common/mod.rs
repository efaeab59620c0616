#![allow(dead_code)]
pub mod gp;
pub mod instances;
pub mod oracles;
pub mod reference_sdp;
