//! The override protocol and the two benchmark tasks.

pub mod food_shelter;
pub mod food_truck;
mod protocol;

pub use food_shelter::{build_food_shelter, FoodShelterConfig, FoodShelterSpace};
pub use food_truck::{build_food_truck, FoodTruck, FoodTruckLayout, Restaurant, RestaurantRewards, TruckState};
pub use protocol::{
    centaur_action, episode_return, protocol_step, run_episode, write_episode_csv, CentaurConfig,
    FixedPolicyMachine, MachineAgent, SimState, StepRecord,
};
