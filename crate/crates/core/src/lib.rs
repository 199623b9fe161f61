//! Simulation of neural-network inference on resistive crossbar arrays with
//! nonlinear I-V characteristics, and training of multilayer perceptrons whose
//! transfer function is the device law itself.
//!
//! The pieces, bottom up:
//!
//! * [`device`]: sinh and complex I-V laws, the half-bias nonlinearity `k`.
//! * [`crossbar`]: sub-weight decomposition, weight-to-state mapping, readout.
//! * [`nn`]: transfer functions, clipped ReLU, softmax loss, the model type.
//! * [`trainer`]: backpropagation, SGD, gradient checking.
//! * [`data`]: MNIST and CIFAR-10 loaders, augmentation, synthetic inputs.
//! * [`experiments`]: the sweeps and tables driven by the `rramnet` binary.

pub mod config;
pub mod crossbar;
pub mod data;
pub mod device;
pub mod error;
pub mod experiments;
pub mod matrix;
pub mod nn;
pub mod trainer;

pub use crossbar::{
    decompose_weights, ideal_vmm, map_naive_linear, simulate_naive_inference, AffineMap, CrossbarPair, NaiveScheme,
};
pub use data::Dataset;
pub use device::{b_of_k, k_of_b, ComplexDevice, DeviceModel, NonlinearityK, SinhDevice};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use nn::{accuracy, clipped_relu, clipped_relu_grad, softmax_ce, transfer, ForwardTrace, MlpModel, TransferKind};
pub use trainer::{backward, grad_check, sgd_step, train, GradCheckReport, History, InitScale, TrainConfig};
