# FTS Engine - Utilities Module
