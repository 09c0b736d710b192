//! Agent-in-the-loop drone framework: a message bus, the command adapter,
//! a flight controller, episodic memory, an action library, the agent loop,
//! scenario worlds and an experiment harness.

pub mod actions;
pub mod agent;
pub mod bus;
pub mod controller;
pub mod geometry;
pub mod harness;
pub mod memory;
pub mod roschain;
pub mod scenarios;
