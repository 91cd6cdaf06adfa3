from dplp.cli import main

main()
