# FTS Engine - Tests
