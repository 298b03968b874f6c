pub mod netgen;
