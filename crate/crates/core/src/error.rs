use crate::channel::ChannelError;
use crate::config::ConfigError;
use crate::linkbudget::LinkBudgetError;
use crate::optimizer::OptimizerError;
use crate::pa::PaError;
use crate::receiver::ReceiverError;
use crate::waveform::WaveformError;

/// Any error raised by the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Waveform(#[from] WaveformError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Pa(#[from] PaError),
    #[error(transparent)]
    Receiver(#[from] ReceiverError),
    #[error(transparent)]
    LinkBudget(#[from] LinkBudgetError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
}
