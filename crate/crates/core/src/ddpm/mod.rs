//! Minimal denoising diffusion model on low-dimensional data.

mod net;
mod sampler;
mod schedule;
mod train;

pub use net::{table_widths, time_embedding, Dense, EpsNet, Gradients, TIME_FEATURES};
pub use sampler::{
    posterior_mean, reverse_step, sample, GaussianOracle, NoisePredictor, Snapshot,
};
pub use schedule::{forward_diffuse, make_schedule, DiffusionSchedule, ScheduleConfig};
pub use train::{batch_loss, batch_loss_and_grad, train, train_step, Adam, TrainConfig};
