pub mod backward_euler;
