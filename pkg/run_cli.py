"""
Скрипт запуска командной строки DAISI
"""
from daisi_assimilation.run_cli import main

if __name__ == "__main__":
    raise SystemExit(main())
