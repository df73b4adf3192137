mod adam;
mod mlp;
mod spsa;
mod train;
mod checkpoint;
mod oracle;

pub use mlp::{
    feature_batch, features_to_sigma, sigma_features, BatchNorm, BatchStats, Forward, ForwardCache, Layer,
    MlpParams, Mode, BN_EPS, BN_MOMENTUM,
};
pub use oracle::{optimize_lambda_instance, OracleConfig, OracleOutcome};
pub use adam::Adam;
pub use spsa::{rademacher, spsa_along, spsa_gradient};
pub use train::{
    loss_gradient, train_dnn, CurvePoint, FixedScenario, ScenarioSource, GradientEngine, MlpPolicy, ScenarioDistribution, TrainConfig, TrainOutcome,
};
pub use checkpoint::{
    from_checkpoint_str, load_checkpoint, load_checkpoint_for, save_checkpoint, to_checkpoint_string,
    CHECKPOINT_VERSION,
};
