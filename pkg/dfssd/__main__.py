from dfssd.cli import cli

cli()
