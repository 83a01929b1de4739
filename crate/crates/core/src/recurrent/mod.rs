//! LSTM cells and stacks with hand-written backpropagation through time, the
//! dense/MLP building blocks, and a shared minibatch regression trainer.

mod dense;
mod lstm;
mod mlp;
mod regressor;
mod train;

pub use dense::{Activation, Dense};
pub use lstm::{LstmLayer, LstmStack, LstmState, LstmStep, SequenceOutput, StackCache};
pub use mlp::{Mlp, MlpCache};
pub use regressor::{LstmRegressor, MlpRegressor};
pub use train::{fit_regressor, rmse, FitOutcome, WindowRegressor};

#[cfg(test)]
mod tests;
