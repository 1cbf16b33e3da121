# repo root on sys.path so tests import fairfl and utils without installing
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
