fn main() { std::process::exit(dicke::cli::main()); }
