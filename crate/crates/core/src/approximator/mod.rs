//! From-scratch function approximators: tanh MLPs with explicit reverse-mode
//! gradients, an Adam optimizer, input/output standardization and a
//! masked-softmax policy head.

mod adam;
mod checkpoint;
mod mlp;
mod normalize;
mod policy_head;
mod value;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{read_mlp, read_value_net, write_mlp, write_value_net, CHECKPOINT_VERSION};
pub use mlp::{Mlp, Trace};
pub use normalize::{NormalizationScheme, Standardizer, STD_FLOOR};
pub use policy_head::{masked_softmax, PolicyHead};
pub use value::{fit_value, FitConfig, FitReport, ValueNet};
