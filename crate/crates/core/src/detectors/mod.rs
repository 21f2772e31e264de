pub mod adaptive_rake;
pub mod blind;
pub mod conventional;
