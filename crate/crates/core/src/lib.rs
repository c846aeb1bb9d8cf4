pub mod grammar;
pub mod terminal;
pub mod util;
pub mod earley;
pub mod recognizer;
pub mod mask;
pub mod lm;
pub mod decode;
pub mod turing;
pub mod expr;
pub mod eval;
