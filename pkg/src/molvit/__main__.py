from molvit.cli import main

main()
