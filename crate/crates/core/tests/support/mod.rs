pub mod linearized;
