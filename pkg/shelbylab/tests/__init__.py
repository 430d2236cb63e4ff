# -*- coding: utf-8 -*-
"""
Tests for the shelbylab package
"""
