// Placeholder entry point; the subcommand surface lands with the studio module.
int main() { return 0; }
