from uiokit.cli import main_entry

main_entry()
