pub mod dyadic;
pub mod error;
pub mod haar;
pub mod rational;
pub mod sets;
pub mod jones;
pub mod block;
pub mod operator;
pub mod generators;
pub mod quasi_diag;
pub mod factorization;
pub mod primarity;
pub mod verify;
pub mod figure;
