//! Federated rounds: client-side training variants and server-side
//! aggregation strategies.

mod aggregate;
mod client;
mod fedaws;
mod round;
mod turbosvm;

pub use aggregate::{fedavg_aggregate, fedopt_step, pseudo_gradient};
pub use client::{
    client_objective, client_update, moon_embedding_loss, ClientConfig, ClientVariant, LocalUpdate,
};
pub use fedaws::{fedaws_loss_and_gradient, fedaws_regularize};
pub use round::{sample_clients, Federation, RoundOutcome, ServerStrategy};
pub use turbosvm::{
    class_samples_from_models, lambda_value, spread_loss_and_gradient, turbosvm_maxmargin_regularize,
    turbosvm_selective_aggregate, LambdaDirection, LambdaSchedule,
};
