"""Allow ``python -m itac`` as an alias for the console script."""

from .cli import main

main()
