# FTS Engine - Core Module
