//! Polynomial submersions of the unit ball of `C^n` whose level sets are
//! forced to be long by obstacle labyrinths, together with the sampling
//! based checks that certify each inductive step.

pub mod geometry;
pub mod holo;
pub mod induction;
pub mod labyrinth;
pub mod okaweil;
pub mod poly;
pub mod run;
pub mod sampling;
pub mod verify;
