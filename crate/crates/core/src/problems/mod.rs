//! Problem front-ends and synthetic generators.

pub mod bicycle;
pub mod boxqp;
pub mod lasso;
pub mod libsvm;
pub mod logistic;
pub mod ocp;
pub mod quadratic;
pub mod sparse;

pub use bicycle::{make_bicycle_mpc, BicycleConfig, BicycleModel, SCurve};
pub use boxqp::{make_box_qp, BoxQpInstance};
pub use lasso::{make_lasso, LassoInstance};
pub use libsvm::{parse_libsvm, parse_libsvm_str, write_libsvm};
pub use logistic::{lambda_max, logistic_oracle, make_synthetic_logistic, LogisticFn, LogisticProblem};
pub use ocp::{ocp_single_shooting, DiagQuadCost, OcpModel, OcpProblem, SingleShooting};
pub use quadratic::{LeastSquares, QuadraticFn};
pub use sparse::CsrMatrix;
