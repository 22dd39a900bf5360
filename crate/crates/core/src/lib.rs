pub mod dictionary;
pub mod evaluate;
pub mod io;
pub mod losses;
pub mod lp;
pub mod sim;
pub mod theory;
pub mod train;
