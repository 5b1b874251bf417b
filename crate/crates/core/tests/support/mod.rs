pub mod fixture_gen;
