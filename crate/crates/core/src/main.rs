fn main() {
    std::process::exit(actloc::cli::main());
}
