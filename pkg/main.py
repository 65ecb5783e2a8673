"""Main entry point for the DPRP toolkit."""

from pathlib import Path

from src.config import settings

# Create the default output directory
Path(settings.output_dir).mkdir(parents=True, exist_ok=True)


def main():
    """Run the command-line interface."""
    # Import here so settings are loaded before logging is configured
    from src.cli.app import main as cli_main

    cli_main()


if __name__ == "__main__":
    main()
