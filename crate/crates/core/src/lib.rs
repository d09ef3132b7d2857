pub mod linalg;
pub mod kgen;
pub mod epgauge;
pub mod models;
pub mod transport;
pub mod scan;
