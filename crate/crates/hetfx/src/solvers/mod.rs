//! Weighted least squares, weighted LASSO by cyclic coordinate descent,
//! cross-validated penalty selection scored by Post-LASSO error, and the
//! adaptive-LASSO loading construction.

mod cv;
mod lasso;
mod wols;

pub use cv::{
    adaptive_loadings, cluster_folds, cross_validate_lambda, post_lasso_refit, ridge_pilot,
    CvOptions, CvRow, LassoFit, LoadingMode,
};
pub use lasso::{lambda_max, lasso_path, weighted_lasso, LassoOptions};
pub use wols::{wols_fit, WolsFit};
