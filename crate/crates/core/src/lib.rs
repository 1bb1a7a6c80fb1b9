pub mod adfamily;
pub mod correction;
pub mod flr;
pub mod hetero;
pub mod mixture;
pub mod seed;
pub mod simlab;
pub mod spectrum;
