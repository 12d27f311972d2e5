fn main() {
    std::process::exit(biased_erm_lab::cli::main_exit());
}
