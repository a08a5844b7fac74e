//! Concrete decision problems: top-k selection, website advertising
//! (submodular coverage), and Markowitz portfolio allocation.

mod portfolio;
mod topk;
mod webadv;

pub use portfolio::{FrankWolfeSettings, FwSolveInfo, PortfolioProblem};
pub use topk::TopKProblem;
pub use webadv::{WebAdvertisingProblem, WebAdvSolveMode};
