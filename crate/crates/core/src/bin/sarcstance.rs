fn main() -> anyhow::Result<()> {
    sarcstance::cli::main()
}
