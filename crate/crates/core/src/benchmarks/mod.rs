//! Independent reference solutions: the closed-form Merton problem, a
//! policy-improvement HJB solver and functional quantization.

mod merton;
mod pde;
mod power_dual;
mod quantization;

pub use merton::MertonSolution;
pub use pde::{log_wealth_grid, policy_improvement_solve, PdeSettings, PdeSolution};
pub use power_dual::{constant_market_dual, PowerSumDual};
pub use quantization::{
    kl_basis, lloyd_standard, lloyd_step, quantized_expectation, quantized_policy, KlBasis, Lloyd1d, QuantizedPolicy,
    Quantizer, QuantizerSource,
};
