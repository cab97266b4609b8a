pub mod cli;
pub mod consensus;
pub mod gateway;
pub mod groups;
pub mod ledger;
pub mod sim;
pub mod trust;
