"""THIS FILE WAS GENERATED BY SETUP.PY DURING BUILDING/PACKAGING"""
version = '0.1.0.dev0+git.unknown'
git_revision = 'unknown'
git_dirty = None
